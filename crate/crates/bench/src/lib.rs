//! Fixtures shared by the benchmarks. Everything is seeded so that repeated
//! benchmark runs time the same work.

use randpol_core::driver::{draw_features, initialize, sample_state_actions, sample_states};
use randpol_core::rng::{seeded, StreamRng};
use randpol_core::{
    empirical_bellman_targets, fit_q, linear_quadratic, synthetic_1d, EnvModel, Error, FeatureSet, PolicyClass,
    PolicyFunction, QFunction, RandpolConfig, Resolved, TargetBatch,
};

pub fn rng(seed: u64) -> StreamRng {
    seeded(seed)
}

/// Default sample sizes with evaluation switched off.
pub fn synthetic_config() -> RandpolConfig {
    RandpolConfig { evaluate: false, ..Default::default() }
}

pub struct Problem {
    pub env: EnvModel,
    pub cfg: RandpolConfig,
    pub res: Resolved,
}

impl Problem {
    pub fn new(env: EnvModel, cfg: RandpolConfig) -> Self {
        let res = cfg.resolve(&env).expect("benchmark configs are valid");
        Self { env, cfg, res }
    }

    pub fn synthetic() -> Self {
        Self::new(synthetic_1d(), synthetic_config())
    }

    pub fn linear_quadratic() -> Self {
        let env = linear_quadratic(0.5, 0.8).expect("valid LQ parameters");
        Self::new(env, RandpolConfig { evaluate: false, ..Default::default() })
    }

    pub fn q_features(&self, seed: u64) -> FeatureSet {
        draw_features(&self.env, &self.cfg, &self.res, &mut rng(seed)).unwrap().q_features
    }

    pub fn policy_class(&self, seed: u64) -> PolicyClass {
        draw_features(&self.env, &self.cfg, &self.res, &mut rng(seed)).unwrap().policy_class
    }

    pub fn initial(&self) -> (QFunction, PolicyFunction) {
        let (q, pi, _) = initialize(&self.env, &self.cfg, &self.res).unwrap();
        (q, pi)
    }

    /// Bellman targets for the zero `Q` under the zero policy.
    pub fn batch(&self, seed: u64) -> TargetBatch {
        let mut r = rng(seed);
        let (q, pi) = self.initial();
        let points = sample_state_actions(&self.env, self.cfg.n_q, self.cfg.sampling, &mut r).unwrap();
        empirical_bellman_targets(&self.env, &q, &pi, &points, self.cfg.m, &mut r).unwrap()
    }

    /// A fitted critic to improve against.
    pub fn fitted_q(&self, seed: u64) -> QFunction {
        let batch = self.batch(seed);
        match fit_q(&batch, self.q_features(seed + 1), self.res.c_bound, &self.cfg.lsq) {
            Ok(fit) => fit.q,
            Err(Error::NotConverged { weights, .. }) => {
                QFunction::new(self.q_features(seed + 1), weights, self.res.c_bound, self.env.state_dim()).unwrap()
            }
            Err(e) => panic!("fixture fit failed: {e}"),
        }
    }

    pub fn states(&self, seed: u64) -> Vec<Vec<f64>> {
        sample_states(&self.env, self.cfg.n_pi, self.cfg.sampling, &mut rng(seed)).unwrap()
    }
}
