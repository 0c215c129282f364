//! Closed-form covariance functions.
//!
//! Six kernels are provided:
//!
//! | kernel | function | limit of |
//! |---|---|---|
//! | squared exponential | [`se_kernel`] | shallow trig net, Gaussian features |
//! | spectral mixture | [`sm_kernel`] | shallow trig net, Gaussian-mixture features |
//! | two-layer deep SE | [`dgp_se_kernel`] | deep trig net, i.i.d. weights |
//! | latent-support | [`dgp_support_kernel`] | deep trig net, conditioned inner weights |
//! | mixed-spectrum support | [`sm_dgp_kernel`] | as above with mixture outer features |
//! | deep NTK | [`ntk_dgp_kernel`] | tangent kernel of the deep trig net |
//!
//! Points are plain slices; point sets are `&[Vec<f64>]` with one point per
//! entry. All kernels are pure and `Send + Sync`.

pub(crate) mod posterior;
mod support;

use nalgebra::DMatrix;

use crate::error::{check_dim, check_positive, Error, Result};

pub use posterior::{gp_condition, GPPosterior};
pub use support::{dgp_support_kernel, sm_dgp_kernel, LatentMoments, SmSupportKernel, SupportKernel, SupportSet};

/// Tolerance on the sum of mixture weights.
pub const MIXTURE_WEIGHT_TOL: f64 = 1e-12;

/// Squared exponential hyperparameters:
/// `k(x, y) = amplitude_sq * exp(-1/2 * sum_d (x_d - y_d)^2 / l_d^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SEHyper {
    amplitude_sq: f64,
    lengthscales: Vec<f64>,
}

impl SEHyper {
    pub fn new(amplitude_sq: f64, lengthscales: Vec<f64>) -> Result<Self> {
        check_positive("amplitude_sq", amplitude_sq)?;
        if lengthscales.is_empty() {
            return Err(Error::Input("at least one lengthscale is required".into()));
        }
        for &l in &lengthscales {
            check_positive("lengthscale", l)?;
        }
        Ok(Self { amplitude_sq, lengthscales })
    }

    /// Unit amplitude and unit lengthscales in `dim` dimensions.
    pub fn unit(dim: usize) -> Self {
        Self { amplitude_sq: 1.0, lengthscales: vec![1.0; dim.max(1)] }
    }

    pub fn isotropic(amplitude_sq: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        Self::new(amplitude_sq, vec![lengthscale; dim.max(1)])
    }

    pub fn amplitude_sq(&self) -> f64 {
        self.amplitude_sq
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Diagonal of the spectral covariance, `1 / l_d^2`.
    pub fn spectral_variances(&self) -> Vec<f64> {
        self.lengthscales.iter().map(|l| 1.0 / (l * l)).collect()
    }

    /// `exp(-1/2 * scaled squared distance)`, without the amplitude.
    pub(crate) fn correlation(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x
            .iter()
            .zip(y)
            .zip(&self.lengthscales)
            .map(|((a, b), l)| {
                let d = (a - b) / l;
                d * d
            })
            .sum();
        (-0.5 * r2).exp()
    }
}

/// One Gaussian component of a spectral density: weight, mean frequency and
/// diagonal spectral covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct SMComponent {
    weight: f64,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl SMComponent {
    pub fn new(weight: f64, mean: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        check_positive("mixture weight", weight)?;
        check_dim(mean.len(), scale.len())?;
        if mean.is_empty() {
            return Err(Error::Input("mixture component needs at least one dimension".into()));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Input("mixture mean must be finite".into()));
        }
        for &s in &scale {
            check_positive("mixture scale", s)?;
        }
        Ok(Self { weight, mean, scale })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Diagonal of the component's spectral covariance.
    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Checks that a mixture is non-empty, dimensionally uniform and normalized.
pub fn validate_mixture(components: &[SMComponent]) -> Result<usize> {
    let first = components.first().ok_or_else(|| Error::Input("mixture has no components".into()))?;
    let dim = first.dim();
    for c in components {
        check_dim(dim, c.dim())?;
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if (total - 1.0).abs() > MIXTURE_WEIGHT_TOL {
        return Err(Error::Input(format!("mixture weights sum to {total}, expected 1")));
    }
    Ok(dim)
}

/// Hyperparameters of the two-layer composition: inner SE kernel on the
/// inputs, outer SE kernel on the `bottleneck`-dimensional latent output.
#[derive(Debug, Clone, PartialEq)]
pub struct DGPHyper {
    inner: SEHyper,
    outer: SEHyper,
    bottleneck: usize,
}

impl DGPHyper {
    /// `outer` must have one lengthscale per bottleneck dimension.
    pub fn new(inner: SEHyper, outer: SEHyper, bottleneck: usize) -> Result<Self> {
        if bottleneck == 0 {
            return Err(Error::Input("bottleneck H must be at least 1".into()));
        }
        check_dim(bottleneck, outer.dim())?;
        Ok(Self { inner, outer, bottleneck })
    }

    /// Isotropic outer kernel with amplitude `outer_amp` and lengthscale `outer_ls`.
    pub fn isotropic(inner: SEHyper, outer_amp: f64, outer_ls: f64, bottleneck: usize) -> Result<Self> {
        let outer = SEHyper::isotropic(outer_amp, outer_ls, bottleneck.max(1))?;
        Self::new(inner, outer, bottleneck)
    }

    /// All amplitudes and lengthscales equal to one.
    pub fn unit(dim: usize, bottleneck: usize) -> Result<Self> {
        Self::new(SEHyper::unit(dim), SEHyper::unit(bottleneck), bottleneck)
    }

    pub fn inner(&self) -> &SEHyper {
        &self.inner
    }

    pub fn outer(&self) -> &SEHyper {
        &self.outer
    }

    pub fn bottleneck(&self) -> usize {
        self.bottleneck
    }

    /// Infimum of the kernel over all input pairs.
    pub fn lower_bound(&self) -> f64 {
        let s1 = self.inner.amplitude_sq;
        self.outer.amplitude_sq
            * self.outer.lengthscales.iter().map(|l| (1.0 + 2.0 * s1 / (l * l)).powf(-0.5)).product::<f64>()
    }
}

/// Squared exponential kernel.
pub fn se_kernel(x: &[f64], y: &[f64], h: &SEHyper) -> Result<f64> {
    check_dim(h.dim(), x.len())?;
    check_dim(h.dim(), y.len())?;
    Ok(h.amplitude_sq * h.correlation(x, y))
}

/// Spectral mixture kernel
/// `amp * sum_a w_a cos(mu_a . tau) exp(-1/2 tau' L_a tau)`, `tau = x - y`.
pub fn sm_kernel(x: &[f64], y: &[f64], comps: &[SMComponent], amplitude_sq: f64) -> Result<f64> {
    check_positive("amplitude_sq", amplitude_sq)?;
    let dim = validate_mixture(comps)?;
    check_dim(dim, x.len())?;
    check_dim(dim, y.len())?;
    Ok(amplitude_sq * sm_unchecked(x, y, comps))
}

fn sm_unchecked(x: &[f64], y: &[f64], comps: &[SMComponent]) -> f64 {
    comps
        .iter()
        .map(|c| {
            let mut phase = 0.0;
            let mut quad = 0.0;
            for d in 0..x.len() {
                let tau = x[d] - y[d];
                phase += c.mean[d] * tau;
                quad += c.scale[d] * tau * tau;
            }
            c.weight * phase.cos() * (-0.5 * quad).exp()
        })
        .sum()
}

/// Covariance of the two-layer SE composition with bottleneck `H`:
/// `s2 * prod_i {1 + 2 (s1 / l2_i^2) [1 - k1(x, y)]}^(-1/2)` where `k1` is
/// the unit-amplitude inner SE correlation. With isotropic outer scale this is
/// `s2 * {1 + 2 (s1/l2^2)(1 - k1)}^(-H/2)`.
pub fn dgp_se_kernel(x: &[f64], y: &[f64], h: &DGPHyper) -> Result<f64> {
    check_dim(h.inner.dim(), x.len())?;
    check_dim(h.inner.dim(), y.len())?;
    Ok(dgp_unchecked(x, y, h))
}

fn dgp_unchecked(x: &[f64], y: &[f64], h: &DGPHyper) -> f64 {
    let gap = 1.0 - h.inner.correlation(x, y);
    let s1 = h.inner.amplitude_sq;
    h.outer.amplitude_sq
        * h.outer.lengthscales.iter().map(|l| (1.0 + 2.0 * s1 / (l * l) * gap).powf(-0.5)).product::<f64>()
}

/// Tangent kernel of the deep trig net with unit hyperparameters:
/// `k_DGP + H k_SE [1 + 2(1 - k_SE)]^(-(H + 2)/2)`, which for `H = 1` is
/// `k_DGP + k_SE k_DGP^3`.
pub fn ntk_dgp_kernel(x: &[f64], y: &[f64], bottleneck: usize) -> Result<f64> {
    check_dim(x.len(), y.len())?;
    if bottleneck == 0 {
        return Err(Error::Input("bottleneck H must be at least 1".into()));
    }
    Ok(ntk_unchecked(x, y, bottleneck))
}

fn ntk_unchecked(x: &[f64], y: &[f64], bottleneck: usize) -> f64 {
    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let kse = (-0.5 * r2).exp();
    let base = 1.0 + 2.0 * (1.0 - kse);
    let hf = bottleneck as f64;
    base.powf(-0.5 * hf) + hf * kse * base.powf(-0.5 * (hf + 2.0))
}

/// A covariance function on `input_dim`-dimensional points.
pub trait Kernel: Send + Sync {
    fn input_dim(&self) -> usize;

    fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64>;
}

impl Kernel for SEHyper {
    fn input_dim(&self) -> usize {
        self.dim()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        se_kernel(x, y, self)
    }
}

impl Kernel for DGPHyper {
    fn input_dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        dgp_se_kernel(x, y, self)
    }
}

/// Tagged description of one of the closed-form kernels.
#[derive(Debug, Clone)]
pub enum KernelSpec {
    SquaredExponential(SEHyper),
    SpectralMixture { amplitude_sq: f64, components: Vec<SMComponent> },
    DeepSE(DGPHyper),
    Support(SupportKernel),
    MixedSpectrumSupport(SmSupportKernel),
    DeepNtk { input_dim: usize, bottleneck: usize },
}

impl KernelSpec {
    pub fn spectral_mixture(amplitude_sq: f64, components: Vec<SMComponent>) -> Result<Self> {
        check_positive("amplitude_sq", amplitude_sq)?;
        validate_mixture(&components)?;
        Ok(Self::SpectralMixture { amplitude_sq, components })
    }

    pub fn deep_ntk(input_dim: usize, bottleneck: usize) -> Result<Self> {
        if bottleneck == 0 || input_dim == 0 {
            return Err(Error::Input("NTK needs input_dim >= 1 and H >= 1".into()));
        }
        Ok(Self::DeepNtk { input_dim, bottleneck })
    }

    /// Short machine-readable name.
    pub fn name(&self) -> &'static str {
        match self {
            Self::SquaredExponential(_) => "se",
            Self::SpectralMixture { .. } => "sm",
            Self::DeepSE(_) => "dgp",
            Self::Support(_) => "dgp_support",
            Self::MixedSpectrumSupport(_) => "sm_dgp",
            Self::DeepNtk { .. } => "ntk",
        }
    }

    /// Value of `k(x, x)`, which is the same for every `x` for all kernels here.
    pub fn prior_variance(&self) -> f64 {
        match self {
            Self::SquaredExponential(h) => h.amplitude_sq(),
            Self::SpectralMixture { amplitude_sq, .. } => *amplitude_sq,
            Self::DeepSE(h) => h.outer().amplitude_sq(),
            Self::Support(k) => k.outer().amplitude_sq(),
            Self::MixedSpectrumSupport(_) => 1.0,
            Self::DeepNtk { bottleneck, .. } => 1.0 + *bottleneck as f64,
        }
    }
}

impl Kernel for KernelSpec {
    fn input_dim(&self) -> usize {
        match self {
            Self::SquaredExponential(h) => h.dim(),
            Self::SpectralMixture { components, .. } => components[0].dim(),
            Self::DeepSE(h) => h.inner().dim(),
            Self::Support(k) => k.input_dim(),
            Self::MixedSpectrumSupport(k) => k.input_dim(),
            Self::DeepNtk { input_dim, .. } => *input_dim,
        }
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            Self::SquaredExponential(h) => se_kernel(x, y, h),
            Self::SpectralMixture { amplitude_sq, components } => {
                check_dim(components[0].dim(), x.len())?;
                check_dim(components[0].dim(), y.len())?;
                Ok(amplitude_sq * sm_unchecked(x, y, components))
            }
            Self::DeepSE(h) => dgp_se_kernel(x, y, h),
            Self::Support(k) => k.eval(x, y),
            Self::MixedSpectrumSupport(k) => k.eval(x, y),
            Self::DeepNtk { input_dim, bottleneck } => {
                check_dim(*input_dim, x.len())?;
                check_dim(*input_dim, y.len())?;
                Ok(ntk_unchecked(x, y, *bottleneck))
            }
        }
    }
}

/// Gram matrix `K[i, j] = k(x_i, x2_j)`; with `x2 = None` the symmetric
/// matrix on `x` is built from its upper triangle.
pub fn kernel_matrix<K: Kernel + ?Sized>(kernel: &K, x: &[Vec<f64>], x2: Option<&[Vec<f64>]>) -> Result<DMatrix<f64>> {
    let d = kernel.input_dim();
    for p in x {
        check_dim(d, p.len())?;
    }
    match x2 {
        Some(x2) => {
            for p in x2 {
                check_dim(d, p.len())?;
            }
            let mut k = DMatrix::zeros(x.len(), x2.len());
            for (i, a) in x.iter().enumerate() {
                for (j, b) in x2.iter().enumerate() {
                    k[(i, j)] = kernel.eval(a, b)?;
                }
            }
            Ok(k)
        }
        None => {
            let n = x.len();
            let mut k = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = kernel.eval(&x[i], &x[j])?;
                    k[(i, j)] = v;
                    k[(j, i)] = v;
                }
            }
            Ok(k)
        }
    }
}

/// Cross-covariance vector `k(x_i, point)` for every training point.
pub(crate) fn kernel_column<K: Kernel + ?Sized>(
    kernel: &K,
    x: &[Vec<f64>],
    point: &[f64],
) -> Result<nalgebra::DVector<f64>> {
    let mut v = nalgebra::DVector::zeros(x.len());
    for (i, a) in x.iter().enumerate() {
        v[i] = kernel.eval(a, point)?;
    }
    Ok(v)
}
