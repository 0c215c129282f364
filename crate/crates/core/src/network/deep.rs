use nalgebra::DMatrix;

use super::{
    standard_normals, trig_feature_map, trig_features_into, Differentiable, FeatureSampler, Features, TrigNetwork,
};
use crate::bayes::weight_posterior;
use crate::error::{check_dim, Error, Result};
use crate::kernel::{DGPHyper, SupportSet};
use crate::linalg::dot;
use crate::rng::SimRng;

/// `f(x) = w2 . Phi(Omega2 W1 Phi(Omega1 x))` with an `H`-dimensional
/// bottleneck `h(x) = W1 Phi(Omega1 x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepTrigNet {
    inner: Features,
    // H x 2 n1, row-major
    w1: Vec<f64>,
    outer: Features,
    w2: Vec<f64>,
}

struct Pass {
    phi1: Vec<f64>,
    phi2: Vec<f64>,
    // df/dh
    grad_h: Vec<f64>,
    value: f64,
}

impl DeepTrigNet {
    pub fn new(inner: Features, w1: DMatrix<f64>, outer: Features, w2: Vec<f64>) -> Result<Self> {
        let h = outer.dim();
        if h == 0 {
            return Err(Error::Input("bottleneck must be >= 1".into()));
        }
        check_dim(h, w1.nrows())?;
        check_dim(2 * inner.rows(), w1.ncols())?;
        check_dim(2 * outer.rows(), w2.len())?;
        let w1 = w1.transpose().as_slice().to_vec();
        Ok(Self { inner, w1, outer, w2 })
    }

    /// Features from the SE spectra of `hyper`, `W1 ~ N(0, s1^2)`, `w2 ~ N(0, s2^2)`.
    pub fn sample(hyper: &DGPHyper, n1: usize, n2: usize, rng: &mut SimRng) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::Input("widths must be >= 1".into()));
        }
        let h = hyper.bottleneck();
        let inner = FeatureSampler::for_se(hyper.inner()).sample_with(n1, rng);
        let w1 = standard_normals(rng, h * 2 * n1, hyper.inner().amplitude_sq().sqrt());
        let outer = FeatureSampler::for_se(hyper.outer()).sample_with(n2, rng);
        let w2 = standard_normals(rng, 2 * n2, hyper.outer().amplitude_sq().sqrt());
        Ok(Self { inner, w1, outer, w2 })
    }

    pub fn inner_features(&self) -> &Features {
        &self.inner
    }

    pub fn outer_features(&self) -> &Features {
        &self.outer
    }

    pub fn inner_weights(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.bottleneck(), 2 * self.inner.rows(), &self.w1)
    }

    pub fn set_inner_weights(&mut self, w1: &DMatrix<f64>) -> Result<()> {
        check_dim(self.bottleneck(), w1.nrows())?;
        check_dim(2 * self.inner.rows(), w1.ncols())?;
        self.w1 = w1.transpose().as_slice().to_vec();
        Ok(())
    }

    pub fn outer_weights(&self) -> &[f64] {
        &self.w2
    }

    pub fn bottleneck(&self) -> usize {
        self.outer.dim()
    }

    pub fn widths(&self) -> (usize, usize) {
        (self.inner.rows(), self.outer.rows())
    }

    /// Bottleneck activations `h(x) = W1 Phi(Omega1 x)`.
    pub fn hidden(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.hidden_from(&trig_feature_map(&self.inner, x)?))
    }

    fn hidden_from(&self, phi1: &[f64]) -> Vec<f64> {
        self.w1.chunks_exact(phi1.len()).map(|row| dot(row, phi1)).collect()
    }

    fn pass(&self, x: &[f64], with_grad: bool) -> Result<Pass> {
        let phi1 = trig_feature_map(&self.inner, x)?;
        let h = self.hidden_from(&phi1);
        let n2 = self.outer.rows();
        let mut phi2 = vec![0.0; 2 * n2];
        trig_features_into(&self.outer, &h, &mut phi2)?;
        let value = dot(&self.w2, &phi2);
        let mut grad_h = vec![0.0; h.len()];
        if with_grad {
            let (c, s) = phi2.split_at(n2);
            let (wc, ws) = self.w2.split_at(n2);
            for k in 0..n2 {
                // phi2 entries already carry the 1/sqrt(n2) factor
                let coeff = ws[k] * c[k] - wc[k] * s[k];
                for (g, w) in grad_h.iter_mut().zip(self.outer.row(k)) {
                    *g += coeff * w;
                }
            }
        }
        Ok(Pass { phi1, phi2, grad_h, value })
    }
}

impl TrigNetwork for DeepTrigNet {
    fn input_dim(&self) -> usize {
        self.inner.dim()
    }

    fn forward(&self, x: &[f64]) -> Result<f64> {
        Ok(self.pass(x, false)?.value)
    }
}

impl Differentiable for DeepTrigNet {
    fn num_params(&self) -> usize {
        self.w1.len() + self.w2.len()
    }

    /// `W1` row-major, then `w2`.
    fn params(&self) -> Vec<f64> {
        let mut p = self.w1.clone();
        p.extend_from_slice(&self.w2);
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim(self.num_params(), params.len())?;
        let (a, b) = params.split_at(self.w1.len());
        self.w1.copy_from_slice(a);
        self.w2.copy_from_slice(b);
        Ok(())
    }

    fn value_and_jacobian(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p = self.pass(x, true)?;
        let mut jac = Vec::with_capacity(self.num_params());
        for g in &p.grad_h {
            jac.extend(p.phi1.iter().map(|v| g * v));
        }
        jac.extend_from_slice(&p.phi2);
        Ok((p.value, jac))
    }

    /// Uses the block structure `J(x).J(y) = Phi2(x).Phi2(y) + (g_x.g_y)(Phi1(x).Phi1(y))`
    /// so the `H x 2 n1` block is never materialized.
    fn tangent_kernel(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let a = self.pass(x, true)?;
        let b = self.pass(y, true)?;
        Ok(dot(&a.phi2, &b.phi2) + dot(&a.grad_h, &b.grad_h) * dot(&a.phi1, &b.phi1))
    }
}

/// Spectrum of `G = v v^T` with `v = Phi(Omega1 x) - Phi(Omega1 y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GSpectrum {
    pub rank: usize,
    /// `|v|^2`, the only nonzero eigenvalue (0 when `rank == 0`).
    pub eigenvalue: f64,
}

pub fn g_matrix_spectrum(features: &Features, x: &[f64], y: &[f64]) -> Result<GSpectrum> {
    let px = trig_feature_map(features, x)?;
    let py = trig_feature_map(features, y)?;
    let eigenvalue: f64 = px.iter().zip(&py).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(GSpectrum { rank: usize::from(eigenvalue > 0.0), eigenvalue })
}

/// Draw `W1` (`H x 2 n1`) with row `i` from the weight posterior given
/// `Phi(Omega1 Z)` and the support outputs `U_i`.
pub fn sample_support_weights(
    inner: &Features,
    support: &SupportSet,
    prior_var: f64,
    noise_var: f64,
    rng: &mut SimRng,
) -> Result<DMatrix<f64>> {
    check_dim(inner.dim(), support.input_dim())?;
    let h = support.bottleneck();
    let mut w1 = DMatrix::zeros(h, 2 * inner.rows());
    for i in 0..h {
        let post = weight_posterior(inner, support.inputs(), &support.output_row(i), prior_var, noise_var)?;
        w1.set_row(i, &post.sample(rng).transpose());
    }
    Ok(w1)
}
