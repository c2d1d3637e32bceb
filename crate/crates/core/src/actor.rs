//! Empirical policy improvement.
//!
//! Each action coordinate is a random-feature expansion over the state,
//! clipped to the action box. Weights maximize the sample mean of `Q(x_i, π(x_i))`
//! by projected gradient ascent from several starting points.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critic::{design_matrix, weight_bound, ActionSection, QFunction};
use crate::envs::Bounds;
use crate::error::{check_dim, invalid, Error, Result};
use crate::features::{sample_feature_params, FeatureDistribution, FeatureSet, Normalization};
use crate::lsq::{solve_box_lsq, BoxLsqConfig};
use crate::rng;

/// A deterministic stationary policy.
pub trait Policy: Sync {
    fn action_dim(&self) -> usize;

    /// Action at `x`. Callers guarantee `x` has the state dimension.
    fn act(&self, x: &[f64]) -> Vec<f64>;
}

/// Adapts a closure into a [`Policy`].
pub struct FnPolicy<F> {
    action_dim: usize,
    f: F,
}

impl<F> FnPolicy<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    pub fn new(action_dim: usize, f: F) -> Self {
        Self { action_dim, f }
    }
}

impl<F> Policy for FnPolicy<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn act(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
}

/// One action coordinate: `Σ_j α_j ψ(x; θ_j)` before clipping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCoordinate {
    features: FeatureSet,
    weights: Vec<f64>,
}

impl PolicyCoordinate {
    pub fn features(&self) -> &FeatureSet {
        &self.features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// The feature sets and weight bound a policy is searched over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyClass {
    pub feature_sets: Vec<FeatureSet>,
    pub c_prime: f64,
    pub action_box: Bounds,
}

impl PolicyClass {
    pub fn new(feature_sets: Vec<FeatureSet>, c_prime: f64, action_box: Bounds) -> Result<Self> {
        check_dim(action_box.dim(), feature_sets.len())?;
        if !(c_prime.is_finite() && c_prime > 0.0) {
            return Err(invalid(format!("C' must be positive, got {c_prime}")));
        }
        let dim = feature_sets[0].input_dim();
        for fs in &feature_sets {
            check_dim(dim, fs.input_dim())?;
        }
        Ok(Self { feature_sets, c_prime, action_box })
    }

    /// Samples `j_pi` features split evenly over the action coordinates
    /// (the first `j_pi mod d_U` coordinates get one extra).
    pub fn sample<R: RngCore + ?Sized>(
        state_box: &Bounds,
        action_box: &Bounds,
        j_pi: usize,
        bandwidth: f64,
        c_prime: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let du = action_box.dim();
        if j_pi < du {
            return Err(invalid(format!("J_π = {j_pi} must be at least the action dimension {du}")));
        }
        let dist = FeatureDistribution::new(bandwidth, state_box.dim())?;
        let norm = Normalization::from_bounds(state_box);
        let feature_sets = (0..du)
            .map(|k| {
                let count = j_pi / du + usize::from(k < j_pi % du);
                sample_feature_params(&dist, count, rng)?.with_normalization(norm.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(feature_sets, c_prime, action_box.clone())
    }

    pub fn state_dim(&self) -> usize {
        self.feature_sets[0].input_dim()
    }

    fn bounds(&self) -> Vec<f64> {
        self.feature_sets.iter().map(|fs| weight_bound(self.c_prime, fs.len())).collect()
    }
}

/// `π = (π_1, …, π_{d_U})`, each coordinate clipped into the action box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFunction {
    coords: Vec<PolicyCoordinate>,
    c_prime: f64,
    action_box: Bounds,
}

impl PolicyFunction {
    pub fn new(class: &PolicyClass, weights: Vec<Vec<f64>>) -> Result<Self> {
        check_dim(class.feature_sets.len(), weights.len())?;
        let coords = class
            .feature_sets
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(k, (fs, w))| {
                check_dim(fs.len(), w.len())?;
                let bound = weight_bound(class.c_prime, fs.len());
                if let Some(bad) = w.iter().find(|a| !(a.abs() <= bound)) {
                    return Err(invalid(format!("coordinate {k}: weight {bad} violates |α| ≤ C'/J = {bound}")));
                }
                Ok(PolicyCoordinate { features: fs.clone(), weights: w })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { coords, c_prime: class.c_prime, action_box: class.action_box.clone() })
    }

    /// All weights zero: the policy outputs the action box's projection of 0.
    pub fn zero(class: &PolicyClass) -> Result<Self> {
        let weights = class.feature_sets.iter().map(|fs| vec![0.0; fs.len()]).collect();
        Self::new(class, weights)
    }

    pub fn coords(&self) -> &[PolicyCoordinate] {
        &self.coords
    }

    pub fn c_prime(&self) -> f64 {
        self.c_prime
    }

    pub fn action_box(&self) -> &Bounds {
        &self.action_box
    }

    pub fn state_dim(&self) -> usize {
        self.coords[0].features.input_dim()
    }

    pub fn class(&self) -> PolicyClass {
        PolicyClass {
            feature_sets: self.coords.iter().map(|c| c.features.clone()).collect(),
            c_prime: self.c_prime,
            action_box: self.action_box.clone(),
        }
    }

    /// Unclipped coordinate outputs.
    pub fn raw_output(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.state_dim(), x.len())?;
        Ok(self.coords.iter().map(|c| c.features.combine(&c.weights, x)).collect())
    }
}

impl Policy for PolicyFunction {
    fn action_dim(&self) -> usize {
        self.coords.len()
    }

    fn act(&self, x: &[f64]) -> Vec<f64> {
        let mut u: Vec<f64> = self.coords.iter().map(|c| c.features.combine(&c.weights, x)).collect();
        self.action_box.clamp(&mut u);
        u
    }
}

/// The clipped action of `p` at `x`.
pub fn policy_action(p: &PolicyFunction, x: &[f64]) -> Result<Vec<f64>> {
    let mut u = p.raw_output(x)?;
    p.action_box.clamp(&mut u);
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActorConfig {
    /// Total starting points: zero, incumbent (when given), then random.
    pub multistarts: usize,
    pub max_iterations: usize,
    /// Stop once an accepted step improves the objective by less than this.
    pub tolerance: f64,
    pub initial_step: f64,
    /// Sufficient-increase constant of the backtracking line search.
    pub armijo: f64,
    pub min_step: f64,
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self { multistarts: 8, max_iterations: 500, tolerance: 1e-8, initial_step: 1.0, armijo: 0.25, min_step: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyImprovement {
    pub policy: PolicyFunction,
    /// `(1/N) Σ_i Q(x_i, π(x_i))` for the returned policy.
    pub objective: f64,
    /// Final objective of every start, in start order.
    pub start_objectives: Vec<f64>,
    pub selected_start: usize,
}

/// Maximizes the empirical objective `(1/N) Σ_i q(x_i, π(x_i))` over `class`.
///
/// Starts from the zero policy, the incumbent (re-expressed on `class`'s
/// features by a constrained least-squares fit if its features differ), and
/// random feasible weights. Returns the best final iterate; ties go to the
/// earliest start.
pub fn improve_policy<R: RngCore + ?Sized>(
    q: &QFunction,
    states: &[Vec<f64>],
    class: &PolicyClass,
    cfg: &ActorConfig,
    incumbent: Option<&PolicyFunction>,
    rng: &mut R,
) -> Result<PolicyImprovement> {
    if states.is_empty() {
        return Err(invalid("policy improvement needs at least one state"));
    }
    check_dim(q.action_dim(), class.action_box.dim())?;
    check_dim(q.state_dim(), class.state_dim())?;
    for x in states {
        check_dim(q.state_dim(), x.len())?;
    }
    if cfg.multistarts == 0 {
        return Err(invalid("at least one multistart is required"));
    }

    let problem = AscentProblem::new(q, states, class)?;
    let bounds = class.bounds();
    let base = rng::fork_seed(rng);

    let mut starts: Vec<Vec<Vec<f64>>> = vec![class.feature_sets.iter().map(|fs| vec![0.0; fs.len()]).collect()];
    if let Some(inc) = incumbent {
        if starts.len() < cfg.multistarts {
            starts.push(problem.express(inc, &bounds)?);
        }
    }
    let mut index = starts.len() as u64;
    while starts.len() < cfg.multistarts {
        let mut r = rng::substream(base, index);
        starts.push(bounds.iter().zip(&class.feature_sets).map(|(&b, fs)| {
            (0..fs.len()).map(|_| r.random_range(-b..=b)).collect()
        }).collect());
        index += 1;
    }

    let results: Vec<(Vec<Vec<f64>>, f64)> = starts
        .into_par_iter()
        .map(|w| problem.ascend(w, &bounds, cfg))
        .collect();

    let mut selected = 0;
    for (i, (_, obj)) in results.iter().enumerate() {
        if *obj > results[selected].1 {
            selected = i;
        }
    }
    let start_objectives = results.iter().map(|(_, o)| *o).collect();
    let (weights, objective) = results.into_iter().nth(selected).expect("selected index is in range");
    Ok(PolicyImprovement { policy: PolicyFunction::new(class, weights)?, objective, start_objectives, selected_start: selected })
}

/// Precomputed data for the empirical improvement objective.
struct AscentProblem {
    sections: Vec<ActionSection>,
    /// Per coordinate, `N × J_k` feature values at the sample states.
    psi: Vec<DMatrix<f64>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl AscentProblem {
    fn new(q: &QFunction, states: &[Vec<f64>], class: &PolicyClass) -> Result<Self> {
        let sections = states.iter().map(|x| q.section(x)).collect::<Result<Vec<_>>>()?;
        let psi = class
            .feature_sets
            .iter()
            .map(|fs| design_matrix(fs, states.iter().cloned()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sections,
            psi,
            lower: class.action_box.lower().to_vec(),
            upper: class.action_box.upper().to_vec(),
            states: states.to_vec(),
        })
    }

    fn n(&self) -> usize {
        self.sections.len()
    }

    /// Clipped actions, `u[i * d_U + k]` for state `i`, plus a mask of the
    /// coordinates that were not clipped.
    fn actions(&self, w: &[Vec<f64>]) -> (Vec<f64>, Vec<bool>) {
        let (n, du) = (self.n(), self.psi.len());
        let mut u = vec![0.0; n * du];
        let mut free = vec![true; n * du];
        for (k, (p, wk)) in self.psi.iter().zip(w).enumerate() {
            let raw = p * DVector::from_column_slice(wk);
            for (i, r) in raw.iter().enumerate() {
                let clipped = r.clamp(self.lower[k], self.upper[k]);
                free[i * du + k] = clipped == *r;
                u[i * du + k] = clipped;
            }
        }
        (u, free)
    }

    fn objective(&self, w: &[Vec<f64>]) -> f64 {
        let du = self.psi.len();
        let (u, _) = self.actions(w);
        self.sections.iter().zip(u.chunks(du)).map(|(s, ui)| s.value(ui)).sum::<f64>() / self.n() as f64
    }

    /// Objective and gradient; clipped coordinates contribute no gradient.
    fn objective_and_grad(&self, w: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
        let (n, du) = (self.n(), self.psi.len());
        let (u, free) = self.actions(w);
        let mut total = 0.0;
        let mut du_grad = vec![DVector::zeros(n); du];
        for (i, (s, ui)) in self.sections.iter().zip(u.chunks(du)).enumerate() {
            let (value, gu) = s.value_and_grad(ui);
            total += value;
            for k in 0..du {
                if free[i * du + k] {
                    du_grad[k][i] = gu[k] / n as f64;
                }
            }
        }
        let grad = self.psi.iter().zip(&du_grad).map(|(p, g)| (p.transpose() * g).iter().copied().collect()).collect();
        (total / n as f64, grad)
    }

    fn ascend(&self, mut w: Vec<Vec<f64>>, bounds: &[f64], cfg: &ActorConfig) -> (Vec<Vec<f64>>, f64) {
        let mut value = self.objective(&w);
        let mut step = cfg.initial_step;
        for _ in 0..cfg.max_iterations {
            let (_, grad) = self.objective_and_grad(&w);
            let accepted = loop {
                let candidate: Vec<Vec<f64>> = w
                    .iter()
                    .zip(&grad)
                    .zip(bounds)
                    .map(|((wk, gk), &b)| wk.iter().zip(gk).map(|(a, g)| (a + step * g).clamp(-b, b)).collect())
                    .collect();
                let predicted: f64 = candidate
                    .iter()
                    .zip(&w)
                    .zip(&grad)
                    .flat_map(|((c, a), g)| c.iter().zip(a).zip(g).map(|((c, a), g)| (c - a) * g))
                    .sum();
                if predicted <= 0.0 {
                    break None;
                }
                let candidate_value = self.objective(&candidate);
                if candidate_value >= value + cfg.armijo * predicted {
                    break Some((candidate, candidate_value));
                }
                step *= 0.5;
                if step < cfg.min_step {
                    break None;
                }
            };
            let Some((candidate, candidate_value)) = accepted else { break };
            let improvement = candidate_value - value;
            w = candidate;
            value = candidate_value;
            step = (step * 2.0).min(1e12);
            if improvement < cfg.tolerance {
                break;
            }
        }
        (w, value)
    }

    /// Weights on this problem's features reproducing `policy` at the sample
    /// states as closely as the box allows.
    fn express(&self, policy: &PolicyFunction, bounds: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_dim(self.psi.len(), policy.coords.len())?;
        let same_features = policy
            .coords
            .iter()
            .zip(&self.psi)
            .all(|(c, p)| c.features.len() == p.ncols());
        let actions: Vec<Vec<f64>> = self.states.iter().map(|x| policy.act(x)).collect();
        let mut out = Vec::with_capacity(self.psi.len());
        for (k, (psi, coord)) in self.psi.iter().zip(&policy.coords).enumerate() {
            let reproduces = same_features && {
                let raw: Vec<f64> = (0..self.n())
                    .map(|i| psi.row(i).iter().zip(&coord.weights).map(|(a, b)| a * b).sum())
                    .collect();
                raw.iter().zip(&actions).all(|(r, a)| r.clamp(self.lower[k], self.upper[k]) == a[k])
            };
            if reproduces && coord.weights.iter().all(|w| w.abs() <= bounds[k]) {
                out.push(coord.weights.clone());
                continue;
            }
            let targets: Vec<f64> = actions.iter().map(|a| a[k]).collect();
            let weights = match solve_box_lsq(psi, &targets, bounds[k], None, &BoxLsqConfig::default()) {
                Ok(sol) => sol.weights,
                Err(Error::NotConverged { weights, .. }) => weights,
                Err(e) => return Err(e),
            };
            out.push(weights);
        }
        Ok(out)
    }
}

/// Mean over `states` of `max_u q(x, u) − q(x, p(x))`, with the max taken
/// over a `resolution`-per-axis action grid together with `p(x)` itself.
/// Only available for action dimension at most 3.
pub fn improvement_gap(q: &QFunction, p: &dyn Policy, states: &[Vec<f64>], action_box: &Bounds, resolution: usize) -> Result<f64> {
    let du = q.action_dim();
    if du > 3 {
        return Err(Error::Unsupported(format!("grid improvement gap for action dimension {du} > 3")));
    }
    check_dim(du, p.action_dim())?;
    check_dim(du, action_box.dim())?;
    if states.is_empty() {
        return Err(invalid("improvement gap needs at least one state"));
    }
    if resolution < 2 {
        return Err(invalid("action grid resolution must be at least 2"));
    }
    let grid = action_box.grid(resolution);
    let gaps = states
        .par_iter()
        .map(|x| {
            let section = q.section(x)?;
            let on_policy = section.value(&p.act(x));
            let best = grid.iter().map(|u| section.value(u)).fold(on_policy, f64::max);
            Ok(best - on_policy)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(gaps.iter().sum::<f64>() / states.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Bounds;
    use crate::features::{FeatureParam, FeatureSet};

    fn unit_box() -> Bounds {
        Bounds::cube(1, -1.0, 1.0).unwrap()
    }

    fn constant_class(c_prime: f64, action_box: Bounds) -> PolicyClass {
        let fs = FeatureSet::new(vec![FeatureParam::new(vec![0.0], 0.0).unwrap()]).unwrap();
        PolicyClass::new(vec![fs], c_prime, action_box).unwrap()
    }

    #[test]
    fn zero_policy_outputs_zero() {
        let mut r = rng::seeded(0);
        let class = PolicyClass::sample(&unit_box(), &unit_box(), 10, 1.0, 2.0, &mut r).unwrap();
        let p = PolicyFunction::zero(&class).unwrap();
        assert_eq!(policy_action(&p, &[0.3]).unwrap(), vec![0.0]);
    }

    #[test]
    fn raw_output_is_clamped_to_box() {
        let class = constant_class(5.0, unit_box());
        let p = PolicyFunction::new(&class, vec![vec![3.7]]).unwrap();
        assert_eq!(policy_action(&p, &[0.0]).unwrap(), vec![1.0]);
        let p = PolicyFunction::new(&class, vec![vec![-0.42]]).unwrap();
        assert_eq!(policy_action(&p, &[0.9]).unwrap(), vec![-0.42]);
    }

    #[test]
    fn policy_action_checks_dimension() {
        let class = constant_class(5.0, unit_box());
        let p = PolicyFunction::zero(&class).unwrap();
        assert!(policy_action(&p, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn weights_outside_box_are_rejected() {
        let class = constant_class(1.0, unit_box());
        assert!(PolicyFunction::new(&class, vec![vec![1.5]]).is_err());
    }

    #[test]
    fn feature_budget_is_split_evenly() {
        let mut r = rng::seeded(0);
        let abox = Bounds::cube(3, -1.0, 1.0).unwrap();
        let class = PolicyClass::sample(&unit_box(), &abox, 20, 1.0, 1.0, &mut r).unwrap();
        let sizes: Vec<usize> = class.feature_sets.iter().map(|f| f.len()).collect();
        assert_eq!(sizes, vec![7, 7, 6]);
    }

    #[test]
    fn empty_state_sample_is_rejected() {
        let class = constant_class(1.0, unit_box());
        let fs = FeatureSet::new(vec![FeatureParam::new(vec![0.0, 1.0], 0.0).unwrap()]).unwrap();
        let q = QFunction::new(fs, vec![0.5], 1.0, 1).unwrap();
        assert!(improve_policy(&q, &[], &class, &ActorConfig::default(), None, &mut rng::seeded(0)).is_err());
    }
}
