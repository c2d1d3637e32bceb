//! Empirical policy evaluation.
//!
//! Targets are `r(x, u) + (γ/M) Σ_i Q(x'_i, π(x'_i))` with `x'_i` drawn from
//! the generative model; the next Q-function is their box-constrained
//! least-squares fit over a random feature set.

use nalgebra::DMatrix;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actor::Policy;
use crate::envs::EnvModel;
use crate::error::{check_dim, invalid, Error, Result};
use crate::features::FeatureSet;
use crate::lsq::{solve_box_lsq, BoxLsqConfig};
use crate::rng;

/// `Q(x, u) = Σ_j α_j φ(x ⊕ u; θ_j)` with `‖α‖∞ ≤ C / J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QFunction {
    features: FeatureSet,
    weights: Vec<f64>,
    c_bound: f64,
    state_dim: usize,
}

/// Largest admissible weight magnitude for a class of total mass `c` over `count` features.
pub fn weight_bound(c: f64, count: usize) -> f64 {
    c / count as f64
}

impl QFunction {
    pub fn new(features: FeatureSet, weights: Vec<f64>, c_bound: f64, state_dim: usize) -> Result<Self> {
        check_dim(features.len(), weights.len())?;
        if !(c_bound.is_finite() && c_bound > 0.0) {
            return Err(invalid(format!("C must be positive, got {c_bound}")));
        }
        if state_dim == 0 || state_dim >= features.input_dim() {
            return Err(invalid(format!(
                "state dimension {state_dim} incompatible with feature input dimension {}",
                features.input_dim()
            )));
        }
        let bound = weight_bound(c_bound, weights.len());
        if let Some((j, w)) = weights.iter().enumerate().find(|(_, w)| !(w.abs() <= bound)) {
            return Err(invalid(format!("weight {j} = {w} violates |α| ≤ C/J = {bound}")));
        }
        Ok(Self { features, weights, c_bound, state_dim })
    }

    /// The zero function over `features`.
    pub fn zero(features: FeatureSet, c_bound: f64, state_dim: usize) -> Result<Self> {
        let weights = vec![0.0; features.len()];
        Self::new(features, weights, c_bound, state_dim)
    }

    pub fn features(&self) -> &FeatureSet {
        &self.features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn c_bound(&self) -> f64 {
        self.c_bound
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.features.input_dim() - self.state_dim
    }

    fn joint(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.state_dim, x.len())?;
        check_dim(self.action_dim(), u.len())?;
        Ok(x.iter().chain(u).copied().collect())
    }

    pub fn value(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        let z = self.joint(x, u)?;
        Ok(self.features.combine(&self.weights, &z))
    }

    /// Gradient of `Q(x, ·)` at `u`, in raw action units.
    pub fn grad_action(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let z = self.joint(x, u)?;
        let jac = self.features.gradient(&z)?;
        let mut g = vec![0.0; self.action_dim()];
        for (row, a) in jac.iter().zip(&self.weights) {
            for (gk, d) in g.iter_mut().zip(&row[self.state_dim..]) {
                *gk += a * d;
            }
        }
        Ok(g)
    }

    /// `Q(x, ·)` with the state part of every feature argument precomputed.
    pub fn section(&self, x: &[f64]) -> Result<ActionSection> {
        check_dim(self.state_dim, x.len())?;
        let norm = self.features.normalization();
        let (dx, du) = (self.state_dim, self.action_dim());
        let zx: Vec<f64> = x
            .iter()
            .zip(&norm.center()[..dx])
            .zip(&norm.scale()[..dx])
            .map(|((v, c), s)| (v - c) * s)
            .collect();
        let center = &norm.center()[dx..];
        let scale = &norm.scale()[dx..];
        // Fold the action normalization into the section so evaluation is a
        // plain affine map of the raw action.
        let mut base = Vec::with_capacity(self.features.len());
        let mut action_freq = Vec::with_capacity(self.features.len() * du);
        for p in self.features.params() {
            let w = p.frequency();
            let mut b = w[..dx].iter().zip(&zx).map(|(a, b)| a * b).sum::<f64>() + p.phase();
            for ((wk, c), s) in w[dx..].iter().zip(center).zip(scale) {
                b -= wk * c * s;
                action_freq.push(wk * s);
            }
            base.push(b);
        }
        Ok(ActionSection { weights: self.weights.clone(), base, action_freq, action_dim: du })
    }
}

/// `u ↦ Q(x, u)` for a fixed state.
#[derive(Debug, Clone)]
pub struct ActionSection {
    weights: Vec<f64>,
    base: Vec<f64>,
    /// Row `j` holds feature `j`'s frequencies times the action scale.
    action_freq: Vec<f64>,
    action_dim: usize,
}

impl ActionSection {
    #[inline]
    fn argument(&self, j: usize, u: &[f64]) -> f64 {
        let du = self.action_dim;
        let w = &self.action_freq[j * du..(j + 1) * du];
        self.base[j] + w.iter().zip(u).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.action_dim);
        self.weights.iter().enumerate().map(|(j, a)| a * self.argument(j, u).cos()).sum()
    }

    /// Value and action gradient together.
    pub fn value_and_grad(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let du = self.action_dim;
        let mut value = 0.0;
        let mut grad = vec![0.0; du];
        for (j, a) in self.weights.iter().enumerate() {
            let (s, c) = self.argument(j, u).sin_cos();
            value += a * c;
            let w = &self.action_freq[j * du..(j + 1) * du];
            for (g, wk) in grad.iter_mut().zip(w) {
                *g -= a * s * wk;
            }
        }
        (value, grad)
    }
}

/// Evaluates `q` at `(x, u)`.
pub fn q_value(q: &QFunction, x: &[f64], u: &[f64]) -> Result<f64> {
    q.value(x, u)
}

/// Gradient of `q` in the action argument.
pub fn q_grad_action(q: &QFunction, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    q.grad_action(x, u)
}

/// Regression data for one policy-evaluation step.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBatch {
    pub points: Vec<(Vec<f64>, Vec<f64>)>,
    pub targets: Vec<f64>,
}

/// Empirical Bellman targets `Ĝ^π_M Q` at each point.
///
/// The policy is evaluated at each sampled next state. Point `n` draws its
/// `m` next states from substream `n` of a base seed taken from `rng`, so the
/// batch does not depend on thread count.
pub fn empirical_bellman_targets<R: RngCore + ?Sized>(
    env: &EnvModel,
    q: &QFunction,
    policy: &dyn Policy,
    points: &[(Vec<f64>, Vec<f64>)],
    m: usize,
    rng: &mut R,
) -> Result<TargetBatch> {
    if m == 0 {
        return Err(invalid("M must be at least 1"));
    }
    if points.is_empty() {
        return Err(invalid("need at least one state-action point"));
    }
    check_dim(env.state_dim(), q.state_dim())?;
    check_dim(env.action_dim(), q.action_dim())?;
    check_dim(env.action_dim(), policy.action_dim())?;
    for (x, u) in points {
        check_dim(env.state_dim(), x.len())?;
        check_dim(env.action_dim(), u.len())?;
    }
    let gamma = env.gamma();
    let base = rng::fork_seed(rng);
    let targets = points
        .par_iter()
        .enumerate()
        .map(|(n, (x, u))| {
            let mut r = rng::substream(base, n as u64);
            let continuation: f64 = (0..m)
                .map(|_| {
                    let y = env.sample_next(x, u, &mut r);
                    let a = policy.act(&y);
                    q.features.combine(&q.weights, &[y, a].concat())
                })
                .sum();
            env.reward(x, u) + gamma * continuation / m as f64
        })
        .collect();
    Ok(TargetBatch { points: points.to_vec(), targets })
}

/// Result of [`fit_q`].
#[derive(Debug, Clone, PartialEq)]
pub struct QFit {
    pub q: QFunction,
    /// Mean squared residual on the batch.
    pub objective: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

/// Least-squares fit of `batch` within `{Σ α_j φ_j : ‖α‖∞ ≤ C/J}`.
///
/// Fails with [`Error::NotConverged`] (carrying the feasible last iterate)
/// if the solver exhausts its iteration cap.
pub fn fit_q(batch: &TargetBatch, features: FeatureSet, c_bound: f64, cfg: &BoxLsqConfig) -> Result<QFit> {
    let (x0, u0) = batch.points.first().ok_or_else(|| invalid("empty target batch"))?;
    check_dim(batch.points.len(), batch.targets.len())?;
    if batch.targets.iter().any(|t| !t.is_finite()) {
        return Err(invalid("targets must be finite"));
    }
    let state_dim = x0.len();
    check_dim(features.input_dim(), state_dim + u0.len())?;
    let design = design_matrix(&features, batch.points.iter().map(|(x, u)| [x.as_slice(), u.as_slice()].concat()))?;
    let bound = weight_bound(c_bound, features.len());
    let solution = solve_box_lsq(&design, &batch.targets, bound, None, cfg)?;
    let q = QFunction::new(features, solution.weights, c_bound, state_dim)?;
    Ok(QFit { q, objective: solution.objective, iterations: solution.iterations, trace: solution.trace })
}

/// `N × J` matrix of feature values, one row per input.
pub fn design_matrix<I>(features: &FeatureSet, inputs: I) -> Result<DMatrix<f64>>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let j = features.len();
    let mut data = Vec::new();
    let mut rows = 0;
    let mut buf = vec![0.0; j];
    for z in inputs {
        check_dim(features.input_dim(), z.len())?;
        features.eval_into(&z, &mut buf);
        data.extend_from_slice(&buf);
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::InvalidArgument("no inputs for design matrix".into()));
    }
    Ok(DMatrix::from_row_slice(rows, j, &data))
}
