//! Generalized policy iteration for continuous state and action spaces with
//! randomized function approximation.
//!
//! The critic fits a random-Fourier-feature expansion of `Q` to empirical
//! Bellman targets under a box constraint on the weights; the actor maximizes
//! the fitted `Q` over a random-feature policy class. [`driver::run`] ties
//! the two into the outer loop. [`theory`] evaluates the sample-size and
//! iteration bounds, and [`oracles`] holds brute-force reference solvers.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actor;
pub mod critic;
pub mod driver;
pub mod envs;
pub mod error;
pub mod features;
pub mod lsq;
pub mod oracles;
pub mod rng;
pub mod theory;

pub use actor::{improve_policy, improvement_gap, policy_action, ActorConfig, FnPolicy, Policy, PolicyClass, PolicyFunction, PolicyImprovement};
pub use critic::{empirical_bellman_targets, fit_q, q_grad_action, q_value, QFit, QFunction, TargetBatch};
pub use driver::{run, run_with, EvalSpec, FeatureMode, IterationDiagnostics, RandpolConfig, Resolved, RunResult, SamplingSpec};
pub use envs::{linear_quadratic, synthetic_1d, synthetic_1d_with, Bounds, EnvModel, LqParams};
pub use error::{Error, Result};
pub use features::{FeatureDistribution, FeatureParam, FeatureSet, Normalization};
pub use lsq::{solve_box_lsq, BoxLsqConfig, BoxLsqSolution};
pub use theory::{ChainDistribution, SampleBounds, TheoryInputs, TheoryReport};
