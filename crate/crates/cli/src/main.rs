use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use randpol_cli::experiment::plot_aggregate;
use randpol_cli::theory::{render_csv, render_table, theory_rows};
use randpol_cli::{load_config, run_experiment, HarnessError, EXIT_FAILED, EXIT_INVALID};
use randpol_core::TheoryInputs;

#[derive(Parser)]
#[command(name = "randpol", version, about = "Randomized-feature policy iteration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds; overrides `seeds` from the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Worker threads; defaults to one per core.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate the sample-size and iteration bounds.
    Theory {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        qmax: f64,
        #[arg(long)]
        cmu: f64,
        /// Probability that an iteration is good.
        #[arg(long)]
        q: f64,
        #[arg(long, default_value_t = 1.0)]
        c_bound: f64,
        #[arg(long, default_value_t = 1.0)]
        c_prime: f64,
        #[arg(long, default_value_t = 1.0)]
        lu: f64,
        #[arg(long, default_value_t = 20)]
        jq: u64,
        #[arg(long, default_value_t = 20)]
        jpi: u64,
        #[arg(long, default_value_t = 100)]
        n: u64,
        #[arg(long)]
        csv: bool,
    },
    /// Draw a line chart from an aggregate CSV.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "perf_error_sup")]
        metric: String,
    },
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, out, seeds, threads, quiet } => {
            let mut cfg = load_config(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(seeds) = seeds {
                cfg.seeds = seeds;
            }
            cfg.validate()?;
            let k = cfg.randpol.k_iterations;
            let go = || {
                run_experiment(&cfg, |seed, d| {
                    if !quiet {
                        eprintln!("seed {seed}: iteration {}/{k}", d.iteration);
                    }
                })
            };
            let outcome = match threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| randpol_core::Error::InvalidArgument(format!("threads: {e}")))?
                    .install(go)?,
                None => go()?,
            };
            println!("wrote {} seed(s) to {}", outcome.runs.len(), outcome.out_dir.display());
            Ok(())
        }
        Command::Theory { epsilon, delta, gamma, qmax, cmu, q, c_bound, c_prime, lu, jq, jpi, n, csv } => {
            let inputs = TheoryInputs {
                epsilon,
                delta,
                gamma,
                q_max: qmax,
                c_mu: cmu,
                c_bound,
                c_prime,
                l_u: lu,
                j_q: jq,
                j_pi: jpi,
                n_for_m: n,
                q_good: q,
            };
            let rows = theory_rows(&inputs)?;
            print!("{}", if csv { render_csv(&rows) } else { render_table(&rows) });
            Ok(())
        }
        Command::Plot { input, out, metric } => {
            let svg = plot_aggregate(&input, &metric)?.ok_or_else(|| HarnessError::Schema {
                path: input.clone(),
                message: format!("column {metric} has no values"),
            })?;
            std::fs::write(&out, svg).map_err(|source| HarnessError::Io { path: out, source })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            debug_assert!(code == EXIT_INVALID || code == EXIT_FAILED);
            ExitCode::from(code as u8)
        }
    }
}
