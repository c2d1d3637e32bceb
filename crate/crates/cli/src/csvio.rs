//! Per-seed and aggregate metric files.

use std::io::Write;
use std::path::Path;

use randpol_core::IterationDiagnostics;

use crate::HarnessError;

/// Increment whenever the column layout of either file changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const SEED_COLUMNS: [&str; 6] =
    ["iteration", "critic_objective", "bellman_residual", "improvement_gap", "perf_error_sup", "wall_ms"];

const METRICS: [&str; 4] = ["critic_objective", "bellman_residual", "improvement_gap", "perf_error_sup"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Csv { path: path.to_path_buf(), message: e.to_string() }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, HarnessError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

/// Writes one seed's diagnostics. `wall_ms` is written as 0 unless `timing`.
pub fn write_seed_csv(path: &Path, rows: &[IterationDiagnostics], timing: bool) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record(SEED_COLUMNS).map_err(csv_err(path))?;
    for d in rows {
        let wall = if timing { d.wall_ms } else { 0.0 };
        w.write_record([
            d.iteration.to_string(),
            d.critic_objective.to_string(),
            d.bellman_residual.to_string(),
            d.improvement_gap.to_string(),
            fmt_opt(d.perf_error_sup),
            wall.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn aggregate_columns() -> Vec<String> {
    let mut cols = vec!["iteration".to_string(), "seeds".to_string()];
    for m in METRICS {
        for s in ["mean", "min", "max"] {
            cols.push(format!("{m}_{s}"));
        }
    }
    cols
}

fn metric(d: &IterationDiagnostics, name: &str) -> Option<f64> {
    match name {
        "critic_objective" => Some(d.critic_objective),
        "bellman_residual" => Some(d.bellman_residual),
        "improvement_gap" => Some(d.improvement_gap),
        "perf_error_sup" => d.perf_error_sup,
        _ => unreachable!("unknown metric {name}"),
    }
}

/// Per-iteration mean, min and max of each metric over the given runs,
/// which must be sorted by seed. Iterations missing from a run are skipped.
pub fn write_aggregate_csv(path: &Path, runs: &[&[IterationDiagnostics]]) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    w.write_record(aggregate_columns()).map_err(csv_err(path))?;
    let iterations = runs.iter().map(|r| r.len()).max().unwrap_or(0);
    for k in 0..iterations {
        let rows: Vec<&IterationDiagnostics> = runs.iter().filter_map(|r| r.get(k)).collect();
        let mut record = vec![(k + 1).to_string(), rows.len().to_string()];
        for m in METRICS {
            let values: Vec<f64> = rows.iter().filter_map(|d| metric(d, m)).collect();
            if values.is_empty() {
                record.extend([String::new(), String::new(), String::new()]);
            } else {
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let min = values.iter().copied().fold(f64::INFINITY, f64::min);
                let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                record.extend([mean.to_string(), min.to_string(), max.to_string()]);
            }
        }
        w.write_record(&record).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Columns of an aggregate file, checked against the expected schema.
pub struct AggregateTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl AggregateTable {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_aggregate_csv(path: &Path) -> Result<AggregateTable, HarnessError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut r = csv::Reader::from_reader(file);
    let columns: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(str::to_string).collect();
    if columns != aggregate_columns() {
        return Err(HarnessError::Schema {
            path: path.to_path_buf(),
            message: format!("expected columns {:?} (schema version {CSV_SCHEMA_VERSION})", aggregate_columns()),
        });
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(csv_err(path))?;
        let row = record
            .iter()
            .map(|f| {
                if f.is_empty() {
                    Ok(None)
                } else {
                    f.parse::<f64>().map(Some).map_err(|e| HarnessError::Schema {
                        path: path.to_path_buf(),
                        message: format!("bad number {f:?}: {e}"),
                    })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(AggregateTable { columns, rows })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}
