//! Brute-force reference solutions: value iteration on a discretized
//! synthetic MDP, the discounted Riccati fixed point, and exhaustive grid
//! search for tiny box-constrained fits.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_dim, invalid, Error, Result};

/// Finite MDP on a uniform state grid and a uniform action grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMdp {
    states: Vec<f64>,
    actions: Vec<f64>,
    /// Row `i * n_u + j` is the next-state law after action `j` in state `i`.
    transitions: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    gamma: f64,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

impl GridMdp {
    pub fn new(states: Vec<f64>, actions: Vec<f64>, transitions: Vec<Vec<f64>>, rewards: Vec<f64>, gamma: f64) -> Result<Self> {
        let (nx, nu) = (states.len(), actions.len());
        if nx == 0 || nu == 0 {
            return Err(invalid("grid MDP needs at least one state and one action"));
        }
        check_dim(nx * nu, transitions.len())?;
        check_dim(nx * nu, rewards.len())?;
        if !(0.0..1.0).contains(&gamma) {
            return Err(invalid(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        for (k, row) in transitions.iter().enumerate() {
            check_dim(nx, row.len())?;
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| *p < 0.0) || (sum - 1.0).abs() > 1e-10 {
                return Err(invalid(format!("transition row {k} is not a probability vector (sum {sum})")));
            }
        }
        Ok(Self { states, actions, transitions, rewards, gamma })
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn actions(&self) -> &[f64] {
        &self.actions
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn transition(&self, i: usize, j: usize) -> &[f64] {
        &self.transitions[i * self.n_actions() + j]
    }

    pub fn reward(&self, i: usize, j: usize) -> f64 {
        self.rewards[i * self.n_actions() + j]
    }

    /// `max_{i,j,y} P(y | i, j) / μ(y)` for `μ` uniform over the state nodes.
    pub fn max_density_ratio(&self) -> f64 {
        let n = self.n_states() as f64;
        self.transitions.iter().flatten().fold(0.0, |m: f64, p| m.max(p * n))
    }

    /// One Bellman sweep `(GQ)(i, j) = r(i, j) + γ Σ_y P(y|i, j) max_u′ Q(y, u′)`.
    pub fn bellman(&self, q: &[f64]) -> Vec<f64> {
        let v = self.greedy_values(q);
        self.backup(&v)
    }

    /// `(G^π Q)(i, j) = r(i, j) + γ Σ_y P(y|i, j) Q(y, π(y))`.
    pub fn policy_bellman(&self, q: &[f64], policy: &[usize]) -> Vec<f64> {
        let nu = self.n_actions();
        let v: Vec<f64> = policy.iter().enumerate().map(|(y, &j)| q[y * nu + j]).collect();
        self.backup(&v)
    }

    fn backup(&self, v: &[f64]) -> Vec<f64> {
        self.transitions
            .par_iter()
            .zip(&self.rewards)
            .map(|(row, r)| r + self.gamma * row.iter().zip(v).map(|(p, v)| p * v).sum::<f64>())
            .collect()
    }

    fn greedy_values(&self, q: &[f64]) -> Vec<f64> {
        q.chunks(self.n_actions()).map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
    }
}

/// Grid version of the synthetic problem with actions on `[0, 1]`.
pub fn discretize_synthetic(n_x: usize, n_u: usize, gamma: f64) -> Result<GridMdp> {
    discretize_synthetic_with(n_x, n_u, gamma, 1.0)
}

/// Nodes `x_i = i/(n_x − 1)` own the cells `[x_i − h/2, x_i + h/2] ∩ [0, 1]`.
/// After action `u` the next-state mass of a cell is its overlap with
/// `[u, 1]` divided by `1 − u`; `u = 1` puts all mass on the last node.
/// Actions are `n_u` evenly spaced points of `[0, u_max]`.
pub fn discretize_synthetic_with(n_x: usize, n_u: usize, gamma: f64, u_max: f64) -> Result<GridMdp> {
    if n_x < 2 || n_u < 2 {
        return Err(invalid("grid sizes must be at least 2"));
    }
    if !(u_max > 0.0 && u_max <= 1.0) {
        return Err(invalid(format!("u_max must lie in (0, 1], got {u_max}")));
    }
    let states = linspace(0.0, 1.0, n_x);
    let actions = linspace(0.0, u_max, n_u);
    let h = 1.0 / (n_x - 1) as f64;
    let law = |u: f64| -> Vec<f64> {
        if 1.0 - u <= 1e-12 {
            let mut row = vec![0.0; n_x];
            row[n_x - 1] = 1.0;
            return row;
        }
        let mut row: Vec<f64> = states
            .iter()
            .map(|&x| {
                let lo = (x - h / 2.0).max(0.0).max(u);
                let hi = (x + h / 2.0).min(1.0);
                (hi - lo).max(0.0) / (1.0 - u)
            })
            .collect();
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= sum);
        row
    };
    let laws: Vec<Vec<f64>> = actions.iter().map(|&u| law(u)).collect();
    let mut transitions = Vec::with_capacity(n_x * n_u);
    let mut rewards = Vec::with_capacity(n_x * n_u);
    for &x in &states {
        for (j, &u) in actions.iter().enumerate() {
            transitions.push(laws[j].clone());
            rewards.push(-(x - u) * (x - u));
        }
    }
    GridMdp::new(states, actions, transitions, rewards, gamma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueIteration {
    /// `Q(i, j)` at index `i * n_u + j`.
    pub q: Vec<f64>,
    /// Greedy action index per state, lowest index on ties.
    pub policy: Vec<usize>,
    pub values: Vec<f64>,
    pub iterations: usize,
    /// `‖GQ − Q‖∞` of the returned table.
    pub residual: f64,
}

/// Iterates `Q ← GQ` from zero until successive iterates differ by at most
/// `tol` in sup norm, which bounds the returned table's residual by `γ·tol`.
pub fn exact_value_iteration(mdp: &GridMdp, tol: f64) -> Result<ValueIteration> {
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    let mut q = vec![0.0; mdp.rewards.len()];
    let mut iterations = 0;
    loop {
        let next = mdp.bellman(&q);
        iterations += 1;
        let change = sup_distance(&next, &q);
        q = next;
        if change <= tol {
            break;
        }
    }
    let residual = sup_distance(&mdp.bellman(&q), &q);
    let policy = greedy_policy(mdp, &q);
    let values = mdp.greedy_values(&q);
    Ok(ValueIteration { q, policy, values, iterations, residual })
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m: f64, (x, y)| m.max((x - y).abs()))
}

/// Per-state argmax with the lowest index winning ties.
pub fn greedy_policy(mdp: &GridMdp, q: &[f64]) -> Vec<usize> {
    q.chunks(mdp.n_actions())
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn bracket(grid: &[f64], x: f64) -> (usize, f64) {
    let n = grid.len();
    let k = grid.partition_point(|g| *g <= x).clamp(1, n - 1) - 1;
    let t = ((x - grid[k]) / (grid[k + 1] - grid[k])).clamp(0.0, 1.0);
    (k, t)
}

impl ValueIteration {
    /// Bilinear interpolation of the table at an off-grid `(x, u)`.
    pub fn interpolate(&self, mdp: &GridMdp, x: f64, u: f64) -> f64 {
        let nu = mdp.n_actions();
        let (i, s) = bracket(&mdp.states, x);
        let (j, t) = bracket(&mdp.actions, u);
        let at = |a: usize, b: usize| self.q[a * nu + b];
        (1.0 - s) * ((1.0 - t) * at(i, j) + t * at(i, j + 1)) + s * ((1.0 - t) * at(i + 1, j) + t * at(i + 1, j + 1))
    }
}

/// Both sides of `‖GQ − G^π Q‖₁ ≤ γ Ĉ ‖HQ − H^π Q‖₁`, norms taken under the
/// uniform law on the grid and `Ĉ` the grid's max density ratio.
pub fn greedy_gap_inequality(mdp: &GridMdp, q: &[f64], policy: &[usize]) -> Result<(f64, f64)> {
    let (nx, nu) = (mdp.n_states(), mdp.n_actions());
    check_dim(nx * nu, q.len())?;
    check_dim(nx, policy.len())?;
    if let Some(bad) = policy.iter().find(|&&j| j >= nu) {
        return Err(invalid(format!("policy action index {bad} out of range")));
    }
    let g = mdp.bellman(q);
    let gp = mdp.policy_bellman(q, policy);
    let lhs = g.iter().zip(&gp).map(|(a, b)| (a - b).abs()).sum::<f64>() / (nx * nu) as f64;
    let h = mdp.greedy_values(q);
    let gap = (0..nx).map(|y| h[y] - q[y * nu + policy[y]]).sum::<f64>() / nx as f64;
    Ok((lhs, mdp.gamma() * mdp.max_density_ratio() * gap))
}

/// Linear dynamics `x′ = A x + B u` with stage cost `xᵀ Q x + uᵀ R u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqSpec {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl LqSpec {
    /// Matrices given row-major; `n` states and `m` inputs.
    pub fn new(a: &[f64], b: &[f64], q: &[f64], r: &[f64], n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(invalid("LQ dimensions must be positive"));
        }
        check_dim(n * n, a.len())?;
        check_dim(n * m, b.len())?;
        check_dim(n * n, q.len())?;
        check_dim(m * m, r.len())?;
        Ok(Self {
            a: DMatrix::from_row_slice(n, n, a),
            b: DMatrix::from_row_slice(n, m, b),
            q: DMatrix::from_row_slice(n, n, q),
            r: DMatrix::from_row_slice(m, m, r),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Optimal discounted cost `xᵀ P x` and feedback `u = −K x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqSolution {
    pub p: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub iterations: usize,
}

impl LqSolution {
    /// Optimal value (negated cost) at `x`.
    pub fn value(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        -(x.transpose() * &self.p * &x)[(0, 0)]
    }

    pub fn action(&self, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        (-(&self.gain * x)).iter().copied().collect()
    }
}

const RICCATI_MAX_ITERATIONS: usize = 1_000_000;
const RICCATI_BLOWUP: f64 = 1e12;

/// Iterates `P ← Q + γAᵀPA − γ²AᵀPB (R + γBᵀPB)⁻¹ BᵀPA` from `P = Q` until
/// the entrywise change is at most `tol`.
pub fn riccati_oracle(spec: &LqSpec, gamma: f64, tol: f64) -> Result<LqSolution> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    let (a, b) = (&spec.a, &spec.b);
    let gain_of = |p: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let s = &spec.r + gamma * b.transpose() * p * b;
        let inv = s.try_inverse().ok_or_else(|| Error::Diverged("R + γBᵀPB is singular".into()))?;
        Ok(gamma * inv * b.transpose() * p * a)
    };
    let mut p = spec.q.clone();
    for iterations in 1..=RICCATI_MAX_ITERATIONS {
        let k = gain_of(&p)?;
        let next = &spec.q + gamma * a.transpose() * &p * a - gamma * a.transpose() * &p * b * &k;
        let next = 0.5 * (&next + next.transpose());
        if next.iter().any(|v| !v.is_finite() || v.abs() > RICCATI_BLOWUP) {
            return Err(Error::Diverged(format!("Riccati iterate exceeded {RICCATI_BLOWUP:e} after {iterations} steps")));
        }
        let change = (&next - &p).amax();
        p = next;
        if change <= tol {
            let gain = gain_of(&p)?;
            return Ok(LqSolution { p, gain, iterations });
        }
    }
    Err(Error::Diverged(format!("Riccati recursion did not settle in {RICCATI_MAX_ITERATIONS} steps")))
}

/// Exhaustive minimization of `‖Φα − y‖²/N` over a lattice of spacing about
/// `step` covering `[−bound, bound]^J`, for `J ≤ 3`. Returns the best lattice
/// point (earliest in lexicographic order on ties) and its objective.
pub fn grid_search_box_lsq(design: &DMatrix<f64>, targets: &[f64], bound: f64, step: f64) -> Result<(Vec<f64>, f64)> {
    let (n, j) = design.shape();
    check_dim(n, targets.len())?;
    if j == 0 || j > 3 {
        return Err(Error::Unsupported(format!("grid search over {j} weights")));
    }
    if !(bound > 0.0 && step > 0.0) {
        return Err(invalid("bound and step must be positive"));
    }
    let points = (2.0 * bound / step).round() as usize + 1;
    let axis = linspace(-bound, bound, points.max(2));
    let per = axis.len();
    let total = per.pow(j as u32);
    let objective = |w: &[f64]| -> f64 {
        (0..n)
            .map(|r| {
                let fit: f64 = (0..j).map(|c| design[(r, c)] * w[c]).sum();
                (fit - targets[r]).powi(2)
            })
            .sum::<f64>()
            / n as f64
    };
    let decode = |mut idx: usize| -> Vec<f64> {
        let mut w = vec![0.0; j];
        for c in (0..j).rev() {
            w[c] = axis[idx % per];
            idx /= per;
        }
        w
    };
    let best = (0..total)
        .into_par_iter()
        .map(|idx| (objective(&decode(idx)), idx))
        .reduce(|| (f64::INFINITY, usize::MAX), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    Ok((decode(best.1), best.0))
}
