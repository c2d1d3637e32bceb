//! Experiment harness for randpol: TOML configs, multi-seed runs with CSV
//! and SVG outputs, and a calculator for the theoretical bounds.

pub mod config;
pub mod csvio;
pub mod experiment;
pub mod plot;
pub mod theory;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{load_config, ConfigError, EnvSpec, ExperimentConfig, LqSpec, SyntheticSpec};
pub use experiment::{run_experiment, ExperimentOutcome, SeedRun};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Core(#[from] randpol_core::Error),

    #[error("seed {seed} failed ({}): {source}", out_dir.display())]
    Run {
        seed: u64,
        #[source]
        source: randpol_core::Error,
        out_dir: PathBuf,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },

    #[error("{}: unexpected layout: {message}", path.display())]
    Schema { path: PathBuf, message: String },
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_FAILED: i32 = 3;

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Core(randpol_core::Error::InvalidArgument(_)) => EXIT_INVALID,
            _ => EXIT_FAILED,
        }
    }
}
