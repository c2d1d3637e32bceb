//! Box-constrained least squares by projected gradient descent.
//!
//! Minimizes `(1/N) ‖Φα − y‖²` subject to `|α_j| ≤ bound`. The gradient
//! step is `1/L̂` where `L̂` is a power-iteration estimate of the Lipschitz
//! constant `2 λ_max(ΦᵀΦ / N)`; the objective is non-increasing across
//! iterations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxLsqConfig {
    pub max_iterations: usize,
    /// Stop once one step improves the objective by less than this.
    pub tolerance: f64,
    pub power_iterations: usize,
    /// Keep the objective value after every iteration.
    pub record_trace: bool,
}

impl Default for BoxLsqConfig {
    fn default() -> Self {
        Self { max_iterations: 5000, tolerance: 1e-10, power_iterations: 200, record_trace: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxLsqSolution {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after each iteration, starting with the initial point.
    pub trace: Vec<f64>,
}

/// Projected gradient descent on the Gram form of the problem.
///
/// `design` is `N × J`, row `n` holding the features of sample `n`.
pub fn solve_box_lsq(
    design: &DMatrix<f64>,
    targets: &[f64],
    bound: f64,
    initial: Option<&[f64]>,
    cfg: &BoxLsqConfig,
) -> Result<BoxLsqSolution> {
    let (n, j) = design.shape();
    if n == 0 || j == 0 {
        return Err(invalid("least-squares problem needs at least one sample and one weight"));
    }
    if targets.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: targets.len() });
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(invalid("least-squares targets must be finite"));
    }
    if !(bound.is_finite() && bound >= 0.0) {
        return Err(invalid(format!("weight bound must be nonnegative, got {bound}")));
    }

    let inv_n = 1.0 / n as f64;
    let y = DVector::from_column_slice(targets);
    let gram = design.tr_mul(design) * inv_n;
    let rhs = design.tr_mul(&y) * inv_n;
    let offset = y.norm_squared() * inv_n;
    let objective = |a: &DVector<f64>| (a.dot(&(&gram * a)) - 2.0 * rhs.dot(a) + offset).max(0.0);

    let mut lipschitz = 2.0 * largest_eigenvalue(&gram, cfg.power_iterations) * 1.01;
    if !(lipschitz > 0.0) {
        lipschitz = 1.0;
    }

    let mut alpha = match initial {
        Some(init) => {
            if init.len() != j {
                return Err(Error::DimensionMismatch { expected: j, got: init.len() });
            }
            DVector::from_iterator(j, init.iter().map(|a| a.clamp(-bound, bound)))
        }
        None => DVector::zeros(j),
    };
    let mut value = objective(&alpha);
    let mut trace = Vec::new();
    if cfg.record_trace {
        trace.push(value);
    }

    let mut last_improvement = f64::INFINITY;
    for iteration in 1..=cfg.max_iterations {
        let grad = (&gram * &alpha - &rhs) * 2.0;
        let (candidate, candidate_value) = loop {
            let step = 1.0 / lipschitz;
            let next = (&alpha - &grad * step).map(|a| a.clamp(-bound, bound));
            let next_value = objective(&next);
            // Guard against an underestimated L̂: never accept an increase.
            if next_value <= value || lipschitz > 1e300 {
                break (next, next_value);
            }
            lipschitz *= 2.0;
        };
        last_improvement = value - candidate_value;
        alpha = candidate;
        value = candidate_value;
        if cfg.record_trace {
            trace.push(value);
        }
        if last_improvement < cfg.tolerance {
            return Ok(finish(design, &y, alpha, iteration, trace));
        }
    }
    let solution = finish(design, &y, alpha, cfg.max_iterations, trace);
    Err(Error::NotConverged {
        iterations: cfg.max_iterations,
        objective: solution.objective,
        last_improvement,
        weights: solution.weights,
    })
}

fn finish(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha: DVector<f64>,
    iterations: usize,
    trace: Vec<f64>,
) -> BoxLsqSolution {
    let residual = design * &alpha - y;
    let objective = residual.norm_squared() / y.len() as f64;
    BoxLsqSolution { weights: alpha.as_slice().to_vec(), objective, iterations, trace }
}

/// Rayleigh-quotient estimate of the largest eigenvalue of a symmetric
/// positive semidefinite matrix.
fn largest_eigenvalue(m: &DMatrix<f64>, iterations: usize) -> f64 {
    let dim = m.nrows();
    let mut v = DVector::from_element(dim, 1.0 / (dim as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..iterations.max(1) {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        estimate = v.dot(&w);
        v = w / norm;
    }
    estimate.max(v.dot(&(m * &v)))
}
