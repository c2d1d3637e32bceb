//! Closed-form sample-size thresholds, iteration counts and the dominating
//! Markov chain used in the convergence analysis.
//!
//! All logarithms are natural. Quantities that count something are returned
//! as ceilings of the underlying formula; the raw values are exposed too.

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in (0, 1), got {v}")))
    }
}

fn ceil_count(raw: f64) -> u64 {
    // `as` saturates, which is the only sensible reading for astronomically large bounds.
    raw.ceil().max(1.0) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    /// Value bound; also used wherever the bounds call for `v_max`.
    pub q_max: f64,
    pub c_mu: f64,
    pub c_bound: f64,
    pub c_prime: f64,
    pub l_u: f64,
    pub j_q: u64,
    pub j_pi: u64,
    /// The `N` inside the `M⁰` bound.
    pub n_for_m: u64,
    /// Probability of a good iteration.
    pub q_good: f64,
}

impl TheoryInputs {
    pub fn validate(&self) -> Result<()> {
        positive("epsilon", self.epsilon)?;
        open_unit("delta", self.delta)?;
        open_unit("gamma", self.gamma)?;
        positive("q_max", self.q_max)?;
        positive("c_mu", self.c_mu)?;
        positive("c_bound", self.c_bound)?;
        positive("c_prime", self.c_prime)?;
        if !(self.l_u.is_finite() && self.l_u >= 0.0) {
            return Err(invalid(format!("l_u must be nonnegative, got {}", self.l_u)));
        }
        for (name, v) in [("j_q", self.j_q), ("j_pi", self.j_pi), ("n_for_m", self.n_for_m)] {
            if v == 0 {
                return Err(invalid(format!("{name} must be at least 1")));
            }
        }
        open_unit("q_good", self.q_good)
    }
}

/// Unrounded sample-size formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawSampleBounds {
    pub j_q0: f64,
    pub j_pi0: f64,
    pub m0: f64,
    pub n_q0: f64,
    pub n_pi0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBounds {
    pub j_q0: u64,
    pub j_pi0: u64,
    pub m0: u64,
    pub n_q0: u64,
    pub n_pi0: u64,
    pub raw: RawSampleBounds,
}

pub fn k_star_raw(epsilon: f64, c_mu: f64, q_max: f64, gamma: f64) -> Result<f64> {
    positive("epsilon", epsilon)?;
    positive("c_mu", c_mu)?;
    positive("q_max", q_max)?;
    open_unit("gamma", gamma)?;
    Ok(((c_mu * epsilon).ln() - (2.0 * q_max).ln()) / gamma.ln())
}

/// Iteration horizon `K*`, clamped below at 1.
pub fn k_star(epsilon: f64, c_mu: f64, q_max: f64, gamma: f64) -> Result<u64> {
    Ok(ceil_count(k_star_raw(epsilon, c_mu, q_max, gamma)?))
}

/// Sample-size thresholds at confidence `inputs.delta`.
pub fn sample_bounds(inputs: &TheoryInputs) -> Result<SampleBounds> {
    inputs.validate()?;
    sample_bounds_at(inputs, inputs.delta)
}

/// Sample-size thresholds with `delta` substituted for `inputs.delta`.
pub fn sample_bounds_at(inputs: &TheoryInputs, delta: f64) -> Result<SampleBounds> {
    open_unit("delta", delta)?;
    let TheoryInputs { epsilon: eps, c_bound, c_prime, l_u, .. } = *inputs;
    let v = inputs.q_max;
    let e = std::f64::consts::E;
    let j_q = inputs.j_q as f64;
    let j_pi = inputs.j_pi as f64;

    let j_q0 = (5.0 * c_bound / eps * (1.0 + (2.0 * (5.0 / delta).ln()).sqrt())).powi(2);
    let j_pi0 = (3.0 * l_u * c_prime / eps * (1.0 + (2.0 * (3.0 / delta).ln()).sqrt())).powi(2);
    let e5 = eps / 5.0;
    let e3 = eps / 3.0;
    let m0 = 2.0 * v * v / (e5 * e5) * (10.0 * inputs.n_for_m as f64 / delta).ln();
    // Logs of products are expanded so that the `J`-th powers never overflow.
    let n_q0 = 128.0 * v * v / (e5 * e5)
        * ((40.0 * e * (j_q + 1.0) / delta).ln() + j_q * (2.0 * e * v / e5).ln());
    let n_pi0 = 128.0 * v * v / (e3 * e3)
        * ((24.0 * e * (j_pi + 1.0) / delta).ln() + j_pi * (2.0 * e * v / (e3 * e3)).ln());

    let raw = RawSampleBounds { j_q0, j_pi0, m0, n_q0, n_pi0 };
    Ok(SampleBounds {
        j_q0: ceil_count(j_q0),
        j_pi0: ceil_count(j_pi0),
        m0: ceil_count(m0),
        n_q0: ceil_count(n_q0),
        n_pi0: ceil_count(n_pi0),
        raw,
    })
}

/// Per-iteration confidence `δ′ = 1 − (1/2 + δ/2)^{1/(K*−1)}`.
///
/// Undefined for `K* = 1`, reported as [`Error::Unsupported`].
pub fn delta_prime(delta: f64, k_star: u64) -> Result<f64> {
    open_unit("delta", delta)?;
    match k_star {
        0 => Err(invalid("K* must be at least 1")),
        1 => Err(Error::Unsupported("δ′ is undefined for K* = 1".into())),
        k => Ok(1.0 - (0.5 + 0.5 * delta).powf(1.0 / (k - 1) as f64)),
    }
}

fn chain_args(q_good: f64, k_star: u64) -> Result<()> {
    if !(0.0..=1.0).contains(&q_good) {
        return Err(invalid(format!("q must lie in [0, 1], got {q_good}")));
    }
    if k_star == 0 {
        return Err(invalid("K* must be at least 1"));
    }
    Ok(())
}

pub fn min_iterations_raw(delta: f64, q_good: f64, k_star: u64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(invalid(format!("delta must lie in [0, 1), got {delta}")));
    }
    open_unit("q_good", q_good)?;
    chain_args(q_good, k_star)?;
    let denom = (0.5 - 0.5 * delta) * (1.0 - q_good) * q_good.powi((k_star - 1) as i32);
    Ok((4.0 / denom).ln())
}

/// Smallest `K` satisfying `K ≥ ln(4 / ((1/2 − δ/2)(1 − q) q^{K*−1}))`.
pub fn min_iterations(delta: f64, q_good: f64, k_star: u64) -> Result<u64> {
    Ok(ceil_count(min_iterations_raw(delta, q_good, k_star)?))
}

/// Distribution over chain states `1..=K*` (index 0 is state 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDistribution {
    pub k_star: u64,
    pub probabilities: Vec<f64>,
}

/// Stationary law of the dominating chain.
pub fn chain_stationary(q_good: f64, k_star: u64) -> Result<ChainDistribution> {
    chain_args(q_good, k_star)?;
    if k_star == 1 {
        return Ok(ChainDistribution { k_star, probabilities: vec![1.0] });
    }
    open_unit("q_good", q_good)?;
    let k = k_star as i32;
    let probabilities = (1..=k)
        .map(|i| match i {
            1 => q_good.powi(k - 1),
            i if i == k => 1.0 - q_good,
            i => (1.0 - q_good) * q_good.powi(k - i),
        })
        .collect();
    Ok(ChainDistribution { k_star, probabilities })
}

/// Transition matrix: from `i`, move to `max(i − 1, 1)` w.p. `q`, else to `K*`.
pub fn chain_transition_matrix(q_good: f64, k_star: u64) -> Result<DMatrix<f64>> {
    chain_args(q_good, k_star)?;
    let n = k_star as usize;
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        p[(i, i.saturating_sub(1))] += q_good;
        p[(i, n - 1)] += 1.0 - q_good;
    }
    Ok(p)
}

/// Exact law of `Y_steps` for the chain started at `Y_0 = K*`.
pub fn chain_distribution_after(q_good: f64, k_star: u64, steps: u64) -> Result<Vec<f64>> {
    let p = chain_transition_matrix(q_good, k_star)?;
    let n = k_star as usize;
    let mut row = DMatrix::zeros(1, n);
    row[(0, n - 1)] = 1.0;
    for _ in 0..steps {
        row = &row * &p;
    }
    Ok(row.iter().copied().collect())
}

pub fn total_variation(a: &[f64], b: &[f64]) -> Result<f64> {
    crate::error::check_dim(a.len(), b.len())?;
    Ok(0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Occupation frequencies of `Y_1, …, Y_steps` along one trajectory from `Y_0 = K*`.
pub fn simulate_chain<R: RngCore + ?Sized>(q_good: f64, k_star: u64, steps: u64, rng: &mut R) -> Result<Vec<f64>> {
    chain_args(q_good, k_star)?;
    if steps == 0 {
        return Err(invalid("steps must be at least 1"));
    }
    let mut counts = vec![0u64; k_star as usize];
    let mut y = k_star;
    for _ in 0..steps {
        y = if rng.random::<f64>() < q_good { (y - 1).max(1) } else { k_star };
        counts[(y - 1) as usize] += 1;
    }
    Ok(counts.into_iter().map(|c| c as f64 / steps as f64).collect())
}

/// Upper bound `ln(1 / (δ′ (1 − q) q^{K*−1}))` on the mixing time.
pub fn mixing_time_bound(delta_prime: f64, q_good: f64, k_star: u64) -> Result<f64> {
    open_unit("delta_prime", delta_prime)?;
    open_unit("q_good", q_good)?;
    chain_args(q_good, k_star)?;
    Ok((1.0 / (delta_prime * (1.0 - q_good) * q_good.powi((k_star - 1) as i32))).ln())
}

/// First `k ≤ max_steps` at which the exact law from `Y_0 = K*` is within
/// total variation `delta_prime` of stationarity.
pub fn exact_mixing_time(delta_prime: f64, q_good: f64, k_star: u64, max_steps: u64) -> Result<Option<u64>> {
    let stationary = chain_stationary(q_good, k_star)?;
    let p = chain_transition_matrix(q_good, k_star)?;
    let n = k_star as usize;
    let mut row = DMatrix::zeros(1, n);
    row[(0, n - 1)] = 1.0;
    for k in 0..=max_steps {
        let law: Vec<f64> = row.iter().copied().collect();
        if total_variation(&law, &stationary.probabilities)? <= delta_prime {
            return Ok(Some(k));
        }
        row = &row * &p;
    }
    Ok(None)
}

/// `2 (1 − γ^{K+1}) / (1 − γ)² · (C_μ ε + γ^{K/2} · 2 Q_max)`.
pub fn error_propagation_bound(epsilon: f64, k: u64, gamma: f64, c_mu: f64, q_max: f64) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(invalid(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    open_unit("gamma", gamma)?;
    positive("c_mu", c_mu)?;
    positive("q_max", q_max)?;
    let k = k as f64;
    let horizon = (1.0 - gamma.powf(k + 1.0)) / (1.0 - gamma).powi(2);
    Ok(2.0 * horizon * (c_mu * epsilon + gamma.powf(k / 2.0) * 2.0 * q_max))
}

/// Every theoretical quantity for one set of inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub inputs: TheoryInputs,
    pub k_star: u64,
    /// `None` when `K* = 1`.
    pub delta_prime: Option<f64>,
    pub bounds_at_delta: SampleBounds,
    /// Thresholds at the per-iteration confidence `δ′`.
    pub bounds_at_delta_prime: Option<SampleBounds>,
    pub min_iterations: u64,
    pub stationary: ChainDistribution,
    pub mixing_time_bound: Option<f64>,
    /// Evaluated at `K = min_iterations`.
    pub propagation_bound: f64,
}

pub fn report(inputs: &TheoryInputs) -> Result<TheoryReport> {
    inputs.validate()?;
    let ks = k_star(inputs.epsilon, inputs.c_mu, inputs.q_max, inputs.gamma)?;
    let dp = match delta_prime(inputs.delta, ks) {
        Ok(v) => Some(v),
        Err(Error::Unsupported(_)) => None,
        Err(e) => return Err(e),
    };
    let min_k = min_iterations(inputs.delta, inputs.q_good, ks)?;
    Ok(TheoryReport {
        inputs: *inputs,
        k_star: ks,
        delta_prime: dp,
        bounds_at_delta: sample_bounds(inputs)?,
        bounds_at_delta_prime: dp.map(|d| sample_bounds_at(inputs, d)).transpose()?,
        min_iterations: min_k,
        stationary: chain_stationary(inputs.q_good, ks)?,
        mixing_time_bound: dp.map(|d| mixing_time_bound(d, inputs.q_good, ks)).transpose()?,
        propagation_bound: error_propagation_bound(inputs.epsilon, min_k, inputs.gamma, inputs.c_mu, inputs.q_max)?,
    })
}
