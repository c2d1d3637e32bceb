//! Multi-seed experiment runs and their on-disk outputs.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use randpol_core::{run_with, IterationDiagnostics, RunResult};

use crate::config::ExperimentConfig;
use crate::csvio::{read_aggregate_csv, write_aggregate_csv, write_seed_csv, write_text, CSV_SCHEMA_VERSION};
use crate::plot::{line_chart, Series};
use crate::HarnessError;

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const FAILURE_FILE: &str = "FAILED";
pub const PLOT_FILE: &str = "perf_error.svg";

pub fn seed_file(seed: u64) -> String {
    format!("seed_{seed}.csv")
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: &'a str,
    csv_schema: u32,
    env: &'a str,
    status: &'a str,
    seeds: Vec<u64>,
    failed_seeds: Vec<u64>,
    files: Vec<String>,
}

#[derive(Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub result: RunResult,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    /// Successful runs, ordered by seed.
    pub runs: Vec<SeedRun>,
}

/// Runs every seed of `cfg` in parallel and writes the per-seed CSVs, the
/// aggregate CSV, the resolved config, a manifest and optionally a chart
/// into `cfg.output_dir`. If any seed fails, the outputs of the others are
/// still written together with a `FAILED` marker.
pub fn run_experiment<F>(cfg: &ExperimentConfig, progress: F) -> Result<ExperimentOutcome, HarnessError>
where
    F: Fn(u64, &IterationDiagnostics) + Sync,
{
    let resolved = cfg.resolved()?;
    let env = cfg.env.build()?;
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(|source| HarnessError::Io { path: out.clone(), source })?;
    let marker = out.join(FAILURE_FILE);
    if marker.exists() {
        std::fs::remove_file(&marker).map_err(|source| HarnessError::Io { path: marker.clone(), source })?;
    }
    write_text(&out.join(RESOLVED_CONFIG_FILE), &resolved.to_toml())?;

    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    let results: Vec<(u64, randpol_core::Result<RunResult>)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut rc = resolved.randpol.clone();
            rc.seed = seed;
            (seed, run_with(&env, &rc, |d| progress(seed, d)))
        })
        .collect();

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let mut files = vec![RESOLVED_CONFIG_FILE.to_string()];
    for (seed, r) in results {
        match r {
            Ok(result) => {
                let name = seed_file(seed);
                write_seed_csv(&out.join(&name), &result.diagnostics, cfg.timing)?;
                files.push(name);
                runs.push(SeedRun { seed, result });
            }
            Err(e) => failures.push((seed, e)),
        }
    }

    let diags: Vec<&[IterationDiagnostics]> = runs.iter().map(|r| r.result.diagnostics.as_slice()).collect();
    write_aggregate_csv(&out.join(AGGREGATE_FILE), &diags)?;
    files.push(AGGREGATE_FILE.to_string());
    if cfg.plot && !runs.is_empty() {
        let svg = plot_aggregate(&out.join(AGGREGATE_FILE), "perf_error_sup")?;
        if let Some(svg) = svg {
            write_text(&out.join(PLOT_FILE), &svg)?;
            files.push(PLOT_FILE.to_string());
        }
    }

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        csv_schema: CSV_SCHEMA_VERSION,
        env: cfg.env.name(),
        status: if failures.is_empty() { "complete" } else { "failed" },
        seeds: runs.iter().map(|r| r.seed).collect(),
        failed_seeds: failures.iter().map(|f| f.0).collect(),
        files,
    };
    write_text(&out.join(MANIFEST_FILE), &toml::to_string(&manifest).expect("manifest serializes"))?;

    if failures.is_empty() {
        return Ok(ExperimentOutcome { out_dir: out, runs });
    }
    let text: String = failures.iter().map(|(s, e)| format!("seed {s}: {e}\n")).collect();
    write_text(&marker, &text)?;
    let (seed, source) = failures.swap_remove(0);
    Err(HarnessError::Run { seed, source, out_dir: out })
}

/// Chart of the mean, min and max of `metric` from an aggregate CSV.
/// Returns `None` when the column holds no values.
pub fn plot_aggregate(path: &Path, metric: &str) -> Result<Option<String>, HarnessError> {
    let table = read_aggregate_csv(path)?;
    let iterations = table.column("iteration").expect("schema checked");
    let mut series = Vec::new();
    for stat in ["mean", "min", "max"] {
        let name = format!("{metric}_{stat}");
        let col = table.column(&name).ok_or_else(|| HarnessError::Schema {
            path: path.to_path_buf(),
            message: format!("no column {name}"),
        })?;
        let points: Vec<(f64, f64)> =
            iterations.iter().zip(&col).filter_map(|(k, v)| Some(((*k)?, (*v)?))).collect();
        if !points.is_empty() {
            series.push(Series { label: stat.to_string(), points });
        }
    }
    if series.is_empty() {
        return Ok(None);
    }
    Ok(Some(line_chart(metric, "iteration", metric, &series)))
}
