//! Random Fourier features.
//!
//! A feature is `cos(w · z + b)` where `z` is the input mapped affinely onto
//! `[-1, 1]^d`, `w ~ N(0, bandwidth² I)` and `b ~ Unif[0, 2π)`. Every feature
//! value lies in `[-1, 1]`.

use std::f64::consts::TAU;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::envs::Bounds;
use crate::error::{check_dim, invalid, Result};
use crate::rng;

/// Frequency and phase of a single cosine feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureParam {
    frequency: Vec<f64>,
    phase: f64,
}

impl FeatureParam {
    pub fn new(frequency: Vec<f64>, phase: f64) -> Result<Self> {
        if frequency.is_empty() {
            return Err(invalid("feature frequency must have at least one coordinate"));
        }
        if !(0.0..TAU).contains(&phase) {
            return Err(invalid(format!("phase {phase} outside [0, 2π)")));
        }
        if frequency.iter().any(|w| !w.is_finite()) {
            return Err(invalid("non-finite feature frequency"));
        }
        Ok(Self { frequency, phase })
    }

    pub fn frequency(&self) -> &[f64] {
        &self.frequency
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    #[inline]
    fn argument(&self, z: &[f64]) -> f64 {
        self.frequency.iter().zip(z).map(|(w, v)| w * v).sum::<f64>() + self.phase
    }
}

/// Sampling distribution of feature parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureDistribution {
    bandwidth: f64,
    input_dim: usize,
}

impl FeatureDistribution {
    pub fn new(bandwidth: f64, input_dim: usize) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(invalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if input_dim == 0 {
            return Err(invalid("input dimension must be positive"));
        }
        Ok(Self { bandwidth, input_dim })
    }

    /// Distribution with the median-heuristic bandwidth for `input_dim`.
    pub fn median_heuristic(input_dim: usize) -> Result<Self> {
        Self::new(median_heuristic_bandwidth(input_dim)?, input_dim)
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }
}

/// Affine map `z = (x - center) * scale` sending a box onto `[-1, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    center: Vec<f64>,
    scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self { center: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    /// Degenerate coordinates (lower == upper) map to 0.
    pub fn from_bounds(bounds: &Bounds) -> Self {
        let (center, scale) = bounds
            .lower()
            .iter()
            .zip(bounds.upper())
            .map(|(&lo, &hi)| {
                let width = hi - lo;
                let scale = if width > 0.0 { 2.0 / width } else { 0.0 };
                (0.5 * (lo + hi), scale)
            })
            .unzip();
        Self { center, scale }
    }

    /// Normalization of the concatenated space `a ⊕ b`.
    pub fn concat(a: &Normalization, b: &Normalization) -> Self {
        Self {
            center: a.center.iter().chain(&b.center).copied().collect(),
            scale: a.scale.iter().chain(&b.scale).copied().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    #[inline]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (((o, &v), &c), &s) in out.iter_mut().zip(x).zip(&self.center).zip(&self.scale) {
            *o = (v - c) * s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }
}

/// An immutable, ordered collection of sampled features over one input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    params: Vec<FeatureParam>,
    input_dim: usize,
    normalization: Normalization,
}

impl FeatureSet {
    /// Features evaluated on raw (unnormalized) inputs.
    pub fn new(params: Vec<FeatureParam>) -> Result<Self> {
        let first = params
            .first()
            .ok_or_else(|| invalid("a feature set needs at least one feature"))?;
        let input_dim = first.frequency.len();
        for p in &params {
            check_dim(input_dim, p.frequency.len())?;
        }
        Ok(Self { params, input_dim, normalization: Normalization::identity(input_dim) })
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Result<Self> {
        check_dim(self.input_dim, normalization.dim())?;
        self.normalization = normalization;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn params(&self) -> &[FeatureParam] {
        &self.params
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    /// Feature values at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim, x.len())?;
        let mut out = vec![0.0; self.len()];
        self.eval_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked variant of [`FeatureSet::eval`]; `out` must have length `len()`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.input_dim);
        self.with_normalized(x, |z| {
            for (o, p) in out.iter_mut().zip(&self.params) {
                *o = p.argument(z).cos();
            }
        })
    }

    /// `Σ_j weights_j φ_j(x)`.
    pub fn combine(&self, weights: &[f64], x: &[f64]) -> f64 {
        debug_assert_eq!(weights.len(), self.len());
        self.with_normalized(x, |z| self.params.iter().zip(weights).map(|(p, a)| a * p.argument(z).cos()).sum())
    }

    /// Runs `f` on the normalized input, avoiding a heap buffer for small inputs.
    #[inline]
    fn with_normalized<T>(&self, x: &[f64], f: impl FnOnce(&[f64]) -> T) -> T {
        const STACK_DIM: usize = 8;
        if x.len() <= STACK_DIM {
            let mut buf = [0.0; STACK_DIM];
            let z = &mut buf[..x.len()];
            self.normalization.apply_into(x, z);
            f(z)
        } else {
            f(&self.normalization.apply(x))
        }
    }

    /// Jacobian of the feature vector with respect to the raw input:
    /// row `j` is `-sin(w_j · z + b_j) · (w_j ∘ scale)`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_dim(self.input_dim, x.len())?;
        let z = self.normalization.apply(x);
        let scale = self.normalization.scale();
        Ok(self
            .params
            .iter()
            .map(|p| {
                let s = -p.argument(&z).sin();
                p.frequency.iter().zip(scale).map(|(w, c)| s * w * c).collect()
            })
            .collect())
    }
}

/// Draws `count` i.i.d. feature parameters from `dist`.
pub fn sample_feature_params<R: RngCore + ?Sized>(
    dist: &FeatureDistribution,
    count: usize,
    rng: &mut R,
) -> Result<FeatureSet> {
    if count == 0 {
        return Err(invalid("feature count must be at least 1"));
    }
    let normal = Normal::new(0.0, dist.bandwidth).map_err(|e| invalid(e.to_string()))?;
    let uniform = Uniform::new(0.0, TAU).map_err(|e| invalid(e.to_string()))?;
    let params = (0..count)
        .map(|_| {
            let frequency = (0..dist.input_dim).map(|_| normal.sample(rng)).collect();
            let phase = uniform.sample(rng);
            FeatureParam { frequency, phase }
        })
        .collect();
    FeatureSet::new(params)
}

/// Feature values of `fs` at `z`.
pub fn eval_features(fs: &FeatureSet, z: &[f64]) -> Result<Vec<f64>> {
    fs.eval(z)
}

/// `J × dim` Jacobian of the feature vector at `z`.
pub fn feature_gradient(fs: &FeatureSet, z: &[f64]) -> Result<Vec<Vec<f64>>> {
    fs.gradient(z)
}

const MEDIAN_PROBE_POINTS: usize = 256;
const MEDIAN_PROBE_SEED: u64 = 0x6d65_6469_616e;

/// Reciprocal of the median pairwise distance among 256 uniform points in
/// `[-1, 1]^dim`. The probe uses a fixed seed, so the result is a pure
/// function of `dim`.
pub fn median_heuristic_bandwidth(dim: usize) -> Result<f64> {
    if dim == 0 {
        return Err(invalid("input dimension must be positive"));
    }
    let mut rng = rng::seeded(MEDIAN_PROBE_SEED);
    let points: Vec<Vec<f64>> = (0..MEDIAN_PROBE_POINTS)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect();
    let mut distances = Vec::with_capacity(MEDIAN_PROBE_POINTS * (MEDIAN_PROBE_POINTS - 1) / 2);
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            distances.push(d2.sqrt());
        }
    }
    distances.sort_by(f64::total_cmp);
    let n = distances.len();
    let median = if n % 2 == 0 {
        0.5 * (distances[n / 2 - 1] + distances[n / 2])
    } else {
        distances[n / 2]
    };
    Ok(1.0 / median)
}
