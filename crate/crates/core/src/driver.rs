//! The approximate policy-iteration loop: sample, evaluate, fit, improve.

use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actor::{improve_policy, improvement_gap, ActorConfig, Policy, PolicyClass, PolicyFunction};
use crate::critic::{empirical_bellman_targets, fit_q, QFit, QFunction};
use crate::envs::{monte_carlo_q, EnvModel};
use crate::error::{invalid, Error, Result};
use crate::features::{median_heuristic_bandwidth, sample_feature_params, FeatureDistribution, FeatureSet, Normalization};
use crate::lsq::BoxLsqConfig;
use crate::rng;

/// Whether random features are redrawn every iteration or drawn once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    Fixed,
    #[default]
    Resample,
}

/// Sampling law for states and actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingSpec {
    /// Product of uniforms over the state and action boxes.
    #[default]
    Uniform,
}

/// How policy performance is measured after each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    /// Points per state axis of the evaluation grid.
    pub grid: usize,
    pub horizon: usize,
    pub episodes: usize,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self { grid: 101, horizon: 60, episodes: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandpolConfig {
    pub n_q: usize,
    pub n_pi: usize,
    pub m: usize,
    pub j_q: usize,
    pub j_pi: usize,
    pub k_iterations: usize,
    /// Defaults to `10 · Q_max`.
    pub c_bound: Option<f64>,
    /// Defaults to ten times the largest action magnitude.
    pub c_prime: Option<f64>,
    /// Frequency scale of the Q features; defaults to the median heuristic.
    pub q_bandwidth: Option<f64>,
    pub pi_bandwidth: Option<f64>,
    pub features: FeatureMode,
    pub sampling: SamplingSpec,
    /// Fresh state-action pairs per iteration for the residual diagnostic.
    pub held_out: usize,
    /// Action grid points per axis for the improvement gap.
    pub gap_resolution: usize,
    /// Measure `‖v^π − v*‖∞` each iteration when the optimum is known.
    pub evaluate: bool,
    pub eval: EvalSpec,
    /// Abort when the critic solver hits its cap instead of keeping its last iterate.
    pub strict_solver: bool,
    pub lsq: BoxLsqConfig,
    pub actor: ActorConfig,
    pub seed: u64,
}

impl Default for RandpolConfig {
    fn default() -> Self {
        Self {
            n_q: 100,
            n_pi: 100,
            m: 10,
            j_q: 20,
            j_pi: 20,
            k_iterations: 50,
            c_bound: None,
            c_prime: None,
            q_bandwidth: None,
            pi_bandwidth: None,
            features: FeatureMode::Resample,
            sampling: SamplingSpec::Uniform,
            held_out: 200,
            gap_resolution: 101,
            evaluate: true,
            eval: EvalSpec::default(),
            strict_solver: false,
            lsq: BoxLsqConfig::default(),
            actor: ActorConfig::default(),
            seed: 0,
        }
    }
}

fn positive_opt(name: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(v) if !(v.is_finite() && v > 0.0) => Err(invalid(format!("{name} must be positive, got {v}"))),
        _ => Ok(()),
    }
}

impl RandpolConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_q", self.n_q),
            ("n_pi", self.n_pi),
            ("m", self.m),
            ("j_q", self.j_q),
            ("j_pi", self.j_pi),
            ("held_out", self.held_out),
            ("eval.grid", self.eval.grid),
            ("eval.horizon", self.eval.horizon),
            ("eval.episodes", self.eval.episodes),
            ("actor.multistarts", self.actor.multistarts),
            ("lsq.max_iterations", self.lsq.max_iterations),
        ] {
            if v == 0 {
                return Err(invalid(format!("{name} must be at least 1")));
            }
        }
        if self.gap_resolution < 2 {
            return Err(invalid("gap_resolution must be at least 2"));
        }
        positive_opt("c_bound", self.c_bound)?;
        positive_opt("c_prime", self.c_prime)?;
        positive_opt("q_bandwidth", self.q_bandwidth)?;
        positive_opt("pi_bandwidth", self.pi_bandwidth)
    }

    /// Fills every defaulted quantity for `env`.
    pub fn resolve(&self, env: &EnvModel) -> Result<Resolved> {
        self.validate()?;
        if self.j_pi < env.action_dim() {
            return Err(invalid(format!("j_pi = {} is below the action dimension {}", self.j_pi, env.action_dim())));
        }
        let q_bandwidth = match self.q_bandwidth {
            Some(b) => b,
            None => median_heuristic_bandwidth(env.state_dim() + env.action_dim())?,
        };
        let pi_bandwidth = match self.pi_bandwidth {
            Some(b) => b,
            None => median_heuristic_bandwidth(env.state_dim())?,
        };
        Ok(Resolved {
            c_bound: self.c_bound.unwrap_or(10.0 * env.q_max()),
            c_prime: self.c_prime.unwrap_or(10.0 * env.action_box().max_abs()),
            q_bandwidth,
            pi_bandwidth,
        })
    }
}

/// Values of the config's defaulted fields for a particular environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub c_bound: f64,
    pub c_prime: f64,
    pub q_bandwidth: f64,
    pub pi_bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    /// 1-based: the diagnostics of the step producing `(Q_k, π_k)`.
    pub iteration: usize,
    /// Mean squared residual of the critic fit.
    pub critic_objective: f64,
    pub critic_converged: bool,
    /// Mean absolute Bellman residual of `Q_k` on held-out pairs.
    pub bellman_residual: f64,
    /// Mean grid-search improvement gap of `π_k` against `Q_k`.
    pub improvement_gap: f64,
    /// Actor objective of `π_k`.
    pub actor_objective: f64,
    /// Monte-Carlo `max_x |v^{π_k}(x) − v*(x)|` over the evaluation grid.
    pub perf_error_sup: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub q: QFunction,
    pub policy: PolicyFunction,
    pub diagnostics: Vec<IterationDiagnostics>,
}

/// `n` i.i.d. state-action pairs.
pub fn sample_state_actions<R: RngCore + ?Sized>(env: &EnvModel, n: usize, spec: SamplingSpec, rng: &mut R) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    match spec {
        SamplingSpec::Uniform => Ok((0..n)
            .map(|_| {
                let x = env.state_box().sample(rng);
                let u = env.action_box().sample(rng);
                (x, u)
            })
            .collect()),
    }
}

/// `n` i.i.d. states.
pub fn sample_states<R: RngCore + ?Sized>(env: &EnvModel, n: usize, spec: SamplingSpec, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    match spec {
        SamplingSpec::Uniform => Ok((0..n).map(|_| env.state_box().sample(rng)).collect()),
    }
}

/// Random features for the critic and the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDraw {
    pub q_features: FeatureSet,
    pub policy_class: PolicyClass,
}

pub fn draw_features<R: RngCore + ?Sized>(env: &EnvModel, cfg: &RandpolConfig, res: &Resolved, rng: &mut R) -> Result<FeatureDraw> {
    let dist = FeatureDistribution::new(res.q_bandwidth, env.state_dim() + env.action_dim())?;
    let norm = Normalization::concat(
        &Normalization::from_bounds(env.state_box()),
        &Normalization::from_bounds(env.action_box()),
    );
    let q_features = sample_feature_params(&dist, cfg.j_q, rng)?.with_normalization(norm)?;
    let policy_class = PolicyClass::sample(env.state_box(), env.action_box(), cfg.j_pi, res.pi_bandwidth, res.c_prime, rng)?;
    Ok(FeatureDraw { q_features, policy_class })
}

/// Monte-Carlo `v^π` at each state.
pub fn evaluate_policy<R: RngCore + ?Sized>(env: &EnvModel, policy: &dyn Policy, states: &[Vec<f64>], eval: &EvalSpec, rng: &mut R) -> Result<Vec<f64>> {
    let base = rng::fork_seed(rng);
    states
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut r = rng::substream(base, i as u64);
            monte_carlo_q(env, policy, x, &policy.act(x), eval.horizon, eval.episodes, &mut r)
        })
        .collect()
}

/// `max_x |v^π(x) − v*(x)|` over the evaluation grid, or `None` when the
/// environment has no known optimum.
pub fn performance_error<R: RngCore + ?Sized>(env: &EnvModel, policy: &dyn Policy, eval: &EvalSpec, rng: &mut R) -> Result<Option<f64>> {
    if !env.has_optimal_value() {
        return Ok(None);
    }
    let states = env.state_box().grid(eval.grid);
    let values = evaluate_policy(env, policy, &states, eval, rng)?;
    Ok(Some(states.iter().zip(&values).fold(0.0, |m: f64, (x, v)| {
        let star = env.optimal_value(x).expect("optimum checked above");
        m.max((v - star).abs())
    })))
}

const DIAGNOSTIC_SALT: u64 = 0x6469_6167_6e6f_7374;

/// Root streams: stream 0 initializes, stream `k` drives iteration `k`.
/// Diagnostics draw from a separate seed so they never perturb the iterates.
fn iteration_stream(seed: u64, k: usize) -> rng::StreamRng {
    rng::substream(seed, k as u64)
}

fn diagnostic_stream(seed: u64, k: usize) -> rng::StreamRng {
    rng::substream(seed ^ DIAGNOSTIC_SALT, k as u64)
}

/// One step: fit `Q_{k+1}` to empirical Bellman targets of `(Q_k, π_k)`,
/// then improve against it. `features` overrides the fresh draw when given.
#[allow(clippy::too_many_arguments)]
pub fn randpol_iteration<R: RngCore + ?Sized>(
    env: &EnvModel,
    q_k: &QFunction,
    pi_k: &PolicyFunction,
    cfg: &RandpolConfig,
    res: &Resolved,
    features: Option<&FeatureDraw>,
    rng: &mut R,
    diag_rng: &mut R,
) -> Result<(QFunction, PolicyFunction, IterationDiagnostics)> {
    let start = Instant::now();
    let fresh;
    let draw = match features {
        Some(d) => d,
        None => {
            fresh = draw_features(env, cfg, res, rng)?;
            &fresh
        }
    };

    let points = sample_state_actions(env, cfg.n_q, cfg.sampling, rng)?;
    let batch = empirical_bellman_targets(env, q_k, pi_k, &points, cfg.m, rng)?;
    let (fit, converged) = match fit_q(&batch, draw.q_features.clone(), res.c_bound, &cfg.lsq) {
        Ok(fit) => (fit, true),
        Err(Error::NotConverged { weights, objective, iterations, .. }) if !cfg.strict_solver => {
            let q = QFunction::new(draw.q_features.clone(), weights, res.c_bound, env.state_dim())?;
            (QFit { q, objective, iterations, trace: Vec::new() }, false)
        }
        Err(e) => return Err(e),
    };
    let q_next = fit.q;

    let states = sample_states(env, cfg.n_pi, cfg.sampling, rng)?;
    let improved = improve_policy(&q_next, &states, &draw.policy_class, &cfg.actor, Some(pi_k), rng)?;
    let pi_next = improved.policy;

    let held_out = sample_state_actions(env, cfg.held_out, cfg.sampling, diag_rng)?;
    let held_batch = empirical_bellman_targets(env, q_k, pi_k, &held_out, cfg.m, diag_rng)?;
    let bellman_residual = held_out
        .iter()
        .zip(&held_batch.targets)
        .map(|((x, u), t)| Ok((q_next.value(x, u)? - t).abs()))
        .sum::<Result<f64>>()?
        / held_out.len() as f64;
    let gap_states: Vec<Vec<f64>> = held_out.iter().map(|(x, _)| x.clone()).collect();
    let gap = improvement_gap(&q_next, &pi_next, &gap_states, env.action_box(), cfg.gap_resolution)?;
    let perf = if cfg.evaluate { performance_error(env, &pi_next, &cfg.eval, diag_rng)? } else { None };

    let diagnostics = IterationDiagnostics {
        iteration: 0,
        critic_objective: fit.objective,
        critic_converged: converged,
        bellman_residual,
        improvement_gap: gap,
        actor_objective: improved.objective,
        perf_error_sup: perf,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((q_next, pi_next, diagnostics))
}

/// Zero critic and its (zero-weight) greedy policy.
pub fn initialize(env: &EnvModel, cfg: &RandpolConfig, res: &Resolved) -> Result<(QFunction, PolicyFunction, FeatureDraw)> {
    let mut r = iteration_stream(cfg.seed, 0);
    let draw = draw_features(env, cfg, res, &mut r)?;
    let q0 = QFunction::zero(draw.q_features.clone(), res.c_bound, env.state_dim())?;
    let states = sample_states(env, cfg.n_pi, cfg.sampling, &mut r)?;
    let pi0 = improve_policy(&q0, &states, &draw.policy_class, &cfg.actor, None, &mut r)?.policy;
    Ok((q0, pi0, draw))
}

/// Runs `k_iterations` steps, calling `observe` after each one.
pub fn run_with<F>(env: &EnvModel, cfg: &RandpolConfig, mut observe: F) -> Result<RunResult>
where
    F: FnMut(&IterationDiagnostics),
{
    let res = cfg.resolve(env)?;
    let (mut q, mut policy, draw) = initialize(env, cfg, &res)?;
    let fixed = (cfg.features == FeatureMode::Fixed).then_some(&draw);
    let mut diagnostics = Vec::with_capacity(cfg.k_iterations);
    for k in 1..=cfg.k_iterations {
        let mut r = iteration_stream(cfg.seed, k);
        let mut d = diagnostic_stream(cfg.seed, k);
        let (q_next, pi_next, mut diag) = randpol_iteration(env, &q, &policy, cfg, &res, fixed, &mut r, &mut d)
            .map_err(|e| Error::Iteration { iteration: k, source: Box::new(e) })?;
        diag.iteration = k;
        observe(&diag);
        diagnostics.push(diag);
        q = q_next;
        policy = pi_next;
    }
    Ok(RunResult { q, policy, diagnostics })
}

pub fn run(env: &EnvModel, cfg: &RandpolConfig) -> Result<RunResult> {
    run_with(env, cfg, |_| {})
}
