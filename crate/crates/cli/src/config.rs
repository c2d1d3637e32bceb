//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use randpol_core::envs::{synthetic_1d_with, LqParams};
use randpol_core::{EnvModel, RandpolConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {} does not exist", .0.display())]
    Missing(PathBuf),

    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub gamma: f64,
    /// Upper end of the action interval; below 1 the transition densities are bounded.
    pub u_max: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { gamma: 0.7, u_max: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqSpec {
    pub dt: f64,
    pub gamma: f64,
    pub position_limit: f64,
    pub velocity_limit: f64,
    pub action_limit: f64,
}

impl Default for LqSpec {
    fn default() -> Self {
        let p = LqParams::new(0.5, 0.8);
        Self {
            dt: p.dt,
            gamma: p.gamma,
            position_limit: p.position_limit,
            velocity_limit: p.velocity_limit,
            action_limit: p.action_limit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EnvSpec {
    #[serde(rename = "synthetic_1d")]
    Synthetic1d(SyntheticSpec),
    LinearQuadratic(LqSpec),
}

impl EnvSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::Synthetic1d(_) => "synthetic_1d",
            EnvSpec::LinearQuadratic(_) => "linear_quadratic",
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            EnvSpec::Synthetic1d(s) => s.gamma,
            EnvSpec::LinearQuadratic(s) => s.gamma,
        }
    }

    pub fn build(&self) -> randpol_core::Result<EnvModel> {
        match *self {
            EnvSpec::Synthetic1d(s) => synthetic_1d_with(s.gamma, s.u_max),
            EnvSpec::LinearQuadratic(s) => LqParams {
                dt: s.dt,
                gamma: s.gamma,
                position_limit: s.position_limit,
                velocity_limit: s.velocity_limit,
                action_limit: s.action_limit,
                clip: true,
            }
            .build(),
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("randpol-out")
}

fn default_plot() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Write an SVG chart of the aggregate performance error.
    #[serde(default = "default_plot")]
    pub plot: bool,
    /// Record measured wall-clock time in the `wall_ms` column. Off by
    /// default so that repeated runs produce identical files.
    #[serde(default)]
    pub timing: bool,
    pub env: EnvSpec,
    #[serde(default)]
    pub randpol: RandpolConfig,
}

impl ExperimentConfig {
    pub fn new(env: EnvSpec) -> Self {
        Self {
            seeds: default_seeds(),
            output_dir: default_output_dir(),
            plot: default_plot(),
            timing: false,
            env,
            randpol: RandpolConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let gamma = self.env.gamma();
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(invalid("env.gamma", format!("must lie in (0, 1), got {gamma}")));
        }
        match self.env {
            EnvSpec::Synthetic1d(s) => {
                if !(s.u_max > 0.0 && s.u_max <= 1.0) {
                    return Err(invalid("env.u_max", format!("must lie in (0, 1], got {}", s.u_max)));
                }
            }
            EnvSpec::LinearQuadratic(s) => {
                for (field, v) in [
                    ("env.dt", s.dt),
                    ("env.position_limit", s.position_limit),
                    ("env.velocity_limit", s.velocity_limit),
                    ("env.action_limit", s.action_limit),
                ] {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(invalid(field, format!("must be positive, got {v}")));
                    }
                }
            }
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        if let Some(s) = self.seeds.iter().find(|s| **s > i64::MAX as u64) {
            return Err(invalid("seeds", format!("seed {s} exceeds {}", i64::MAX)));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("seeds", "seeds must be distinct"));
        }
        let r = &self.randpol;
        for (field, v) in [
            ("randpol.n_q", r.n_q),
            ("randpol.n_pi", r.n_pi),
            ("randpol.m", r.m),
            ("randpol.j_q", r.j_q),
            ("randpol.j_pi", r.j_pi),
            ("randpol.held_out", r.held_out),
            ("randpol.eval.grid", r.eval.grid),
            ("randpol.eval.horizon", r.eval.horizon),
            ("randpol.eval.episodes", r.eval.episodes),
            ("randpol.actor.multistarts", r.actor.multistarts),
            ("randpol.actor.max_iterations", r.actor.max_iterations),
            ("randpol.lsq.max_iterations", r.lsq.max_iterations),
        ] {
            if v == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        if r.gap_resolution < 2 {
            return Err(invalid("randpol.gap_resolution", "must be at least 2"));
        }
        for (field, v) in [
            ("randpol.c_bound", r.c_bound),
            ("randpol.c_prime", r.c_prime),
            ("randpol.q_bandwidth", r.q_bandwidth),
            ("randpol.pi_bandwidth", r.pi_bandwidth),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(invalid(field, format!("must be positive, got {v}")));
                }
            }
        }
        for (field, v) in [
            ("randpol.lsq.tolerance", r.lsq.tolerance),
            ("randpol.actor.tolerance", r.actor.tolerance),
            ("randpol.actor.initial_step", r.actor.initial_step),
            ("randpol.actor.armijo", r.actor.armijo),
            ("randpol.actor.min_step", r.actor.min_step),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(field, format!("must be positive, got {v}")));
            }
        }
        let env = self.env.build().map_err(|e| invalid("env", e.to_string()))?;
        r.resolve(&env).map_err(|e| invalid("randpol", e.to_string()))?;
        Ok(())
    }

    /// The configuration with every defaulted quantity made explicit.
    pub fn resolved(&self) -> Result<ExperimentConfig, ConfigError> {
        self.validate()?;
        let env = self.env.build().map_err(|e| invalid("env", e.to_string()))?;
        let res = self.randpol.resolve(&env).map_err(|e| invalid("randpol", e.to_string()))?;
        let mut out = self.clone();
        out.randpol.c_bound = Some(res.c_bound);
        out.randpol.c_prime = Some(res.c_prime);
        out.randpol.q_bandwidth = Some(res.q_bandwidth);
        out.randpol.pi_bandwidth = Some(res.pi_bandwidth);
        Ok(out)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment configs always serialize")
    }
}

pub fn parse_config(text: &str, path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    if !path.exists() {
        return Err(ConfigError::Missing(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    parse_config(&text, path)
}
