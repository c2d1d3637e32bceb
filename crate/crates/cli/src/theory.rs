//! Tabular rendering of the theoretical bounds.

use randpol_core::theory::{report, TheoryReport};
use randpol_core::TheoryInputs;

use crate::HarnessError;

/// `(quantity, value)` rows. Floats use the shortest representation that
/// parses back to the same bits.
pub fn rows(r: &TheoryReport) -> Vec<(String, String)> {
    let mut rows: Vec<(String, String)> = vec![
        ("k_star".into(), r.k_star.to_string()),
        ("delta_prime".into(), r.delta_prime.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into())),
        ("min_iterations".into(), r.min_iterations.to_string()),
        (
            "mixing_time_bound".into(),
            r.mixing_time_bound.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into()),
        ),
        ("propagation_bound".into(), r.propagation_bound.to_string()),
    ];
    let mut bounds = |tag: &str, b: &randpol_core::SampleBounds| {
        rows.push((format!("j_q0{tag}"), b.j_q0.to_string()));
        rows.push((format!("j_pi0{tag}"), b.j_pi0.to_string()));
        rows.push((format!("m0{tag}"), b.m0.to_string()));
        rows.push((format!("n_q0{tag}"), b.n_q0.to_string()));
        rows.push((format!("n_pi0{tag}"), b.n_pi0.to_string()));
    };
    bounds("", &r.bounds_at_delta);
    if let Some(b) = &r.bounds_at_delta_prime {
        bounds("_at_delta_prime", b);
    }
    for (i, p) in r.stationary.probabilities.iter().enumerate() {
        rows.push((format!("stationary_{i}"), p.to_string()));
    }
    rows
}

pub fn theory_rows(inputs: &TheoryInputs) -> Result<Vec<(String, String)>, HarnessError> {
    Ok(rows(&report(inputs)?))
}

pub fn render_csv(rows: &[(String, String)]) -> String {
    let mut s = String::from("quantity,value\n");
    for (k, v) in rows {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}

pub fn render_table(rows: &[(String, String)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("quantity".len());
    let mut s = format!("{:<width$}  value\n", "quantity");
    for (k, v) in rows {
        s.push_str(&format!("{k:<width$}  {v}\n"));
    }
    s
}
