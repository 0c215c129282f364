//! Random trigonometric networks: feature sampling, forward passes and
//! weight-space Jacobians.

mod deep;
mod sampler;
mod shallow;

pub use deep::{g_matrix_spectrum, sample_support_weights, DeepTrigNet, GSpectrum};
pub use sampler::{CosineSampler, DeepSampler, NetworkSampler, PhaseShiftSampler, ShallowSampler, SupportDeepSampler};
pub use shallow::{CosineNet, PhaseShiftNet, PhaseShiftSpec, ShallowTrigNet};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, check_positive, Error, Result};
use crate::kernel::{validate_mixture, SEHyper, SMComponent};
use crate::linalg::dot;
use crate::rng::{seeded_rng, SimRng};

/// Dense row-major `n x D` matrix of feature vectors (one `omega_i` per row).
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * dim, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("feature entries must be finite".into()));
        }
        Ok(Self { rows, dim, data })
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self { rows, dim, data: vec![0.0; rows * dim] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            check_dim(dim, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `Omega x`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok(self.data.chunks_exact(self.dim.max(1)).take(self.rows).map(|w| dot(w, x)).collect())
    }
}

/// Distribution of the feature vectors `omega`.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSampler {
    /// `N(0, diag(variances))`.
    Gaussian { variances: Vec<f64> },
    /// Mixture of `N(mean_a, diag(scale_a))` with weights `w_a`.
    Mixture { components: Vec<SMComponent> },
}

impl FeatureSampler {
    pub fn gaussian(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::Input("feature dimension must be >= 1".into()));
        }
        for v in &variances {
            check_positive("feature variance", *v)?;
        }
        Ok(Self::Gaussian { variances })
    }

    /// Features whose trig network converges to the SE kernel with these
    /// lengthscales.
    pub fn for_se(h: &SEHyper) -> Self {
        Self::Gaussian { variances: h.spectral_variances() }
    }

    pub fn standard(dim: usize) -> Self {
        Self::Gaussian { variances: vec![1.0; dim] }
    }

    pub fn mixture(components: Vec<SMComponent>) -> Result<Self> {
        validate_mixture(&components)?;
        Ok(Self::Mixture { components })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian { variances } => variances.len(),
            Self::Mixture { components } => components[0].dim(),
        }
    }

    /// Draw one feature vector into `out`; returns the mixture component used
    /// (always 0 for the Gaussian variant).
    pub fn sample_into(&self, rng: &mut SimRng, out: &mut [f64]) -> usize {
        match self {
            Self::Gaussian { variances } => {
                for (o, v) in out.iter_mut().zip(variances) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = z * v.sqrt();
                }
                0
            }
            Self::Mixture { components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = components.len() - 1;
                for (a, c) in components.iter().enumerate() {
                    acc += c.weight();
                    if u < acc {
                        pick = a;
                        break;
                    }
                }
                let c = &components[pick];
                for ((o, m), s) in out.iter_mut().zip(c.mean()).zip(c.scale()) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = m + z * s.sqrt();
                }
                pick
            }
        }
    }

    /// Draw `n` feature rows from `rng`, with the component label of each.
    pub fn sample_labeled(&self, n: usize, rng: &mut SimRng) -> (Features, Vec<usize>) {
        let dim = self.dim();
        let mut data = vec![0.0; n * dim];
        let labels = data.chunks_exact_mut(dim).map(|row| self.sample_into(rng, row)).collect();
        (Features { rows: n, dim, data }, labels)
    }

    pub fn sample_with(&self, n: usize, rng: &mut SimRng) -> Features {
        self.sample_labeled(n, rng).0
    }
}

/// Sample an `n x dim` feature matrix, deterministic given `seed`.
pub fn sample_features(sampler: &FeatureSampler, n: usize, dim: usize, seed: u64) -> Result<Features> {
    if n == 0 {
        return Err(Error::Input("feature count must be >= 1".into()));
    }
    check_dim(sampler.dim(), dim)?;
    Ok(sampler.sample_with(n, &mut seeded_rng(seed)))
}

/// `Phi(Omega x)`: cosines then sines, each scaled by `1/sqrt(n)`.
pub fn trig_feature_map(features: &Features, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; 2 * features.rows()];
    trig_features_into(features, x, &mut out)?;
    Ok(out)
}

pub(crate) fn trig_features_into(features: &Features, x: &[f64], out: &mut [f64]) -> Result<()> {
    check_dim(features.dim(), x.len())?;
    let n = features.rows();
    debug_assert_eq!(out.len(), 2 * n);
    let scale = 1.0 / (n as f64).sqrt();
    let (c, s) = out.split_at_mut(n);
    for i in 0..n {
        let (sn, cs) = dot(features.row(i), x).sin_cos();
        c[i] = cs * scale;
        s[i] = sn * scale;
    }
    Ok(())
}

pub(crate) fn standard_normals(rng: &mut SimRng, n: usize, sd: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * sd
        })
        .collect()
}

/// A scalar random function of a `D`-dimensional input.
pub trait TrigNetwork: Send + Sync {
    fn input_dim(&self) -> usize;

    fn forward(&self, x: &[f64]) -> Result<f64>;

    fn forward_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.forward(x)).collect()
    }
}

/// Networks whose trainable weights (features frozen) admit an exact Jacobian.
pub trait Differentiable: TrigNetwork {
    fn num_params(&self) -> usize;

    /// Flat weight vector in the same order as [`Differentiable::jacobian`].
    fn params(&self) -> Vec<f64>;

    fn set_params(&mut self, params: &[f64]) -> Result<()>;

    fn value_and_jacobian(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    fn jacobian(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_jacobian(x)?.1)
    }

    /// `J(x) . J(y)`.
    fn tangent_kernel(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(dot(&self.jacobian(x)?, &self.jacobian(y)?))
    }
}
