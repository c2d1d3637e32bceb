//! Generative-model environments.
//!
//! An [`EnvModel`] exposes a reward oracle and a next-state sampler that can be
//! queried at any state-action pair, plus the regularity constants the theory
//! needs. Rewards are maximized.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actor::Policy;
use crate::error::{check_dim, invalid, Result};
use crate::oracles::{riccati_oracle, LqSpec};
use crate::rng;

/// Axis-aligned compact box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(invalid("a box needs at least one coordinate"));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(invalid(format!("box coordinate {i} is not finite")));
            }
            if lo > hi {
                return Err(invalid(format!("box coordinate {i}: lower {lo} > upper {hi}")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.lower).zip(&self.upper).all(|((v, lo), hi)| lo <= v && v <= hi)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Largest absolute coordinate value in the box.
    pub fn max_abs(&self) -> f64 {
        self.lower.iter().chain(&self.upper).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Uniform draw from the box.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
            .collect()
    }

    /// `points` evenly spaced nodes per coordinate, in lexicographic order.
    pub fn grid(&self, points: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| {
                if points <= 1 {
                    vec![0.5 * (lo + hi)]
                } else {
                    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
                }
            })
            .collect();
        let mut out = vec![Vec::with_capacity(self.dim())];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

/// Action-Lipschitz constants of the reward and transition kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzInfo {
    pub l_r: f64,
    pub l_p: f64,
    /// `l_r + γ Q_max l_p`.
    pub l_u: f64,
}

impl LipschitzInfo {
    pub fn new(l_r: f64, l_p: f64, gamma: f64, q_max: f64) -> Result<Self> {
        if !(l_r >= 0.0 && l_p >= 0.0) {
            return Err(invalid("Lipschitz constants must be nonnegative"));
        }
        Ok(Self { l_r, l_p, l_u: l_r + gamma * q_max * l_p })
    }
}

pub type RewardFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type TransitionFn = Arc<dyn Fn(&[f64], &[f64], &mut dyn RngCore) -> Vec<f64> + Send + Sync>;
pub type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A generative MDP `(X, U, P, r, γ)`.
#[derive(Clone)]
pub struct EnvModel {
    name: String,
    state_box: Bounds,
    action_box: Bounds,
    gamma: f64,
    r_max: f64,
    lipschitz: Option<LipschitzInfo>,
    c_mu: Option<f64>,
    reward: RewardFn,
    sample_next: TransitionFn,
    optimal_value: Option<ValueFn>,
}

impl fmt::Debug for EnvModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnvModel")
            .field("name", &self.name)
            .field("state_box", &self.state_box)
            .field("action_box", &self.action_box)
            .field("gamma", &self.gamma)
            .field("r_max", &self.r_max)
            .field("lipschitz", &self.lipschitz)
            .field("c_mu", &self.c_mu)
            .finish_non_exhaustive()
    }
}

impl EnvModel {
    pub fn new(
        name: impl Into<String>,
        state_box: Bounds,
        action_box: Bounds,
        gamma: f64,
        r_max: f64,
        reward: RewardFn,
        sample_next: TransitionFn,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(invalid(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(invalid(format!("r_max must be positive and finite, got {r_max}")));
        }
        Ok(Self {
            name: name.into(),
            state_box,
            action_box,
            gamma,
            r_max,
            lipschitz: None,
            c_mu: None,
            reward,
            sample_next,
            optimal_value: None,
        })
    }

    pub fn with_lipschitz(mut self, l_r: f64, l_p: f64) -> Result<Self> {
        self.lipschitz = Some(LipschitzInfo::new(l_r, l_p, self.gamma, self.q_max())?);
        Ok(self)
    }

    pub fn with_concentrability(mut self, c_mu: f64) -> Result<Self> {
        if !(c_mu.is_finite() && c_mu > 0.0) {
            return Err(invalid("concentrability constant must be positive and finite"));
        }
        self.c_mu = Some(c_mu);
        Ok(self)
    }

    /// Attaches the known optimal state-value function.
    pub fn with_optimal_value(mut self, v: ValueFn) -> Self {
        self.optimal_value = Some(v);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_box(&self) -> &Bounds {
        &self.state_box
    }

    pub fn action_box(&self) -> &Bounds {
        &self.action_box
    }

    pub fn state_dim(&self) -> usize {
        self.state_box.dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_box.dim()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// `r_max / (1 - γ)`.
    pub fn q_max(&self) -> f64 {
        self.r_max / (1.0 - self.gamma)
    }

    pub fn lipschitz(&self) -> Option<LipschitzInfo> {
        self.lipschitz
    }

    pub fn c_mu(&self) -> Option<f64> {
        self.c_mu
    }

    pub fn reward(&self, x: &[f64], u: &[f64]) -> f64 {
        (self.reward)(x, u)
    }

    pub fn sample_next(&self, x: &[f64], u: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        (self.sample_next)(x, u, rng)
    }

    pub fn optimal_value(&self, x: &[f64]) -> Option<f64> {
        self.optimal_value.as_ref().map(|v| v(x))
    }

    pub fn has_optimal_value(&self) -> bool {
        self.optimal_value.is_some()
    }
}

/// One-dimensional test problem on `X = U = [0, 1]` with reward `-(x - u)²`
/// and next state drawn uniformly from `[u, 1]`. The optimal policy is
/// `π*(x) = x` with `v* ≡ 0`.
pub fn synthetic_1d() -> EnvModel {
    synthetic_1d_with(0.7, 1.0).expect("default synthetic parameters are valid")
}

/// [`synthetic_1d`] with discount `gamma` and action box `[0, u_max]`.
///
/// For `u_max < 1` the concentrability constant with respect to the uniform
/// distribution is `1 / (1 - u_max)`; at `u_max = 1` it is unbounded and left
/// unset. The transition at `u = 1` is the point mass at 1.
pub fn synthetic_1d_with(gamma: f64, u_max: f64) -> Result<EnvModel> {
    if !(u_max > 0.0 && u_max <= 1.0) {
        return Err(invalid(format!("u_max must lie in (0, 1], got {u_max}")));
    }
    let reward: RewardFn = Arc::new(|x, u| -(x[0] - u[0]).powi(2));
    let sample_next: TransitionFn = Arc::new(|_x, u, rng| {
        let lo = u[0].clamp(0.0, 1.0);
        if lo >= 1.0 {
            vec![1.0]
        } else {
            let y = lo + (1.0 - lo) * rng.random::<f64>();
            vec![y.min(1.0)]
        }
    });
    let env = EnvModel::new(
        "synthetic_1d",
        Bounds::cube(1, 0.0, 1.0)?,
        Bounds::cube(1, 0.0, u_max)?,
        gamma,
        1.0,
        reward,
        sample_next,
    )?
    .with_optimal_value(Arc::new(|_| 0.0));
    if u_max < 1.0 {
        let c_mu = 1.0 / (1.0 - u_max);
        env.with_lipschitz(2.0, c_mu)?.with_concentrability(c_mu)
    } else {
        Ok(env)
    }
}

/// Parameters of the double-integrator environment.
///
/// State `(position, velocity)`, scalar force `u`, dynamics
/// `x' = (x₁ + dt·x₂, x₂ + dt·u)` and reward `-(x₁² + 0.1 x₂² + 0.01 u²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqParams {
    pub dt: f64,
    pub gamma: f64,
    pub position_limit: f64,
    pub velocity_limit: f64,
    pub action_limit: f64,
    /// Clip next states into the state box. Disable only for oracle checks.
    pub clip: bool,
}

pub const LQ_POSITION_COST: f64 = 1.0;
pub const LQ_VELOCITY_COST: f64 = 0.1;
pub const LQ_ACTION_COST: f64 = 0.01;

impl LqParams {
    pub fn new(dt: f64, gamma: f64) -> Self {
        Self { dt, gamma, position_limit: 1.0, velocity_limit: 1.0, action_limit: 3.0, clip: true }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        for (name, v) in [
            ("position_limit", self.position_limit),
            ("velocity_limit", self.velocity_limit),
            ("action_limit", self.action_limit),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// The unclipped linear-quadratic problem as a cost-minimization spec.
    pub fn lq_spec(&self) -> LqSpec {
        LqSpec::new(
            &[1.0, self.dt, 0.0, 1.0],
            &[0.0, self.dt],
            &[LQ_POSITION_COST, 0.0, 0.0, LQ_VELOCITY_COST],
            &[LQ_ACTION_COST],
            2,
            1,
        )
        .expect("double integrator dimensions are consistent")
    }

    pub fn build(&self) -> Result<EnvModel> {
        self.validate()?;
        let p = *self;
        let state_box = Bounds::new(
            vec![-p.position_limit, -p.velocity_limit],
            vec![p.position_limit, p.velocity_limit],
        )?;
        let action_box = Bounds::cube(1, -p.action_limit, p.action_limit)?;
        let r_max = LQ_POSITION_COST * p.position_limit.powi(2)
            + LQ_VELOCITY_COST * p.velocity_limit.powi(2)
            + LQ_ACTION_COST * p.action_limit.powi(2);
        let reward: RewardFn = Arc::new(|x, u| {
            -(LQ_POSITION_COST * x[0] * x[0] + LQ_VELOCITY_COST * x[1] * x[1] + LQ_ACTION_COST * u[0] * u[0])
        });
        let clip_box = state_box.clone();
        let sample_next: TransitionFn = Arc::new(move |x, u, _rng| {
            let mut next = vec![x[0] + p.dt * x[1], x[1] + p.dt * u[0]];
            if p.clip {
                clip_box.clamp(&mut next);
            }
            next
        });
        let mut env = EnvModel::new(
            "linear_quadratic",
            state_box,
            action_box,
            p.gamma,
            r_max,
            reward,
            sample_next,
        )?;
        if let Ok(solution) = riccati_oracle(&self.lq_spec(), p.gamma, 1e-12) {
            env = env.with_optimal_value(Arc::new(move |x| solution.value(x)));
        }
        Ok(env)
    }
}

/// Double integrator with the default limits (position and velocity in
/// `[-1, 1]`, force in `[-3, 3]`).
pub fn linear_quadratic(dt: f64, gamma: f64) -> Result<EnvModel> {
    LqParams::new(dt, gamma).build()
}

/// Monte-Carlo estimate of `Q^π(x0, u0)` truncated at `horizon` steps.
///
/// Episode `e` uses substream `e` of a base seed drawn from `rng`.
pub fn monte_carlo_q<R: RngCore + ?Sized>(
    env: &EnvModel,
    policy: &dyn Policy,
    x0: &[f64],
    u0: &[f64],
    horizon: usize,
    episodes: usize,
    rng: &mut R,
) -> Result<f64> {
    check_dim(env.state_dim(), x0.len())?;
    check_dim(env.action_dim(), u0.len())?;
    check_dim(env.action_dim(), policy.action_dim())?;
    if horizon == 0 || episodes == 0 {
        return Err(invalid("horizon and episodes must be at least 1"));
    }
    let base = rng::fork_seed(rng);
    let returns: Vec<f64> = (0..episodes)
        .into_par_iter()
        .map(|e| {
            let mut r = rng::substream(base, e as u64);
            discounted_return(env, policy, x0, u0, horizon, &mut r)
        })
        .collect();
    Ok(returns.iter().sum::<f64>() / episodes as f64)
}

/// One rollout of `Σ_{t<horizon} γ^t r(x_t, u_t)` with `u_0 = u0`.
pub fn discounted_return(
    env: &EnvModel,
    policy: &dyn Policy,
    x0: &[f64],
    u0: &[f64],
    horizon: usize,
    rng: &mut dyn RngCore,
) -> f64 {
    let mut x = x0.to_vec();
    let mut u = u0.to_vec();
    let mut total = 0.0;
    let mut discount = 1.0;
    for t in 0..horizon {
        total += discount * env.reward(&x, &u);
        if t + 1 == horizon {
            break;
        }
        x = env.sample_next(&x, &u, rng);
        u = policy.act(&x);
        discount *= env.gamma();
    }
    total
}
