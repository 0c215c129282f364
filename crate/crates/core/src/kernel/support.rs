//! Kernels of the two-layer composition whose inner layer is conditioned to
//! pass through a latent support `h(z_m) = u_m`.

use nalgebra::DMatrix;

use super::{gp_condition, validate_mixture, GPPosterior, Kernel, SEHyper, SMComponent};
use crate::error::{check_dim, Error, Result};

/// Latent support (hyperdata): `M` inputs `Z`, an `H x M` output matrix `U`
/// (one row per bottleneck dimension), and the noise variance used when
/// conditioning the inner layer on them.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    input_dim: usize,
    inputs: Vec<Vec<f64>>,
    outputs: DMatrix<f64>,
    noise_var: f64,
}

impl SupportSet {
    pub fn new(input_dim: usize, inputs: Vec<Vec<f64>>, outputs: DMatrix<f64>, noise_var: f64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Input("support input dimension must be >= 1".into()));
        }
        for z in &inputs {
            check_dim(input_dim, z.len())?;
        }
        check_dim(inputs.len(), outputs.ncols())?;
        if outputs.nrows() == 0 {
            return Err(Error::Input("support outputs need at least one row (H >= 1)".into()));
        }
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(Error::Input(format!("support noise variance must be >= 0, got {noise_var}")));
        }
        Ok(Self { input_dim, inputs, outputs, noise_var })
    }

    /// A support with no points (`M = 0`).
    pub fn empty(input_dim: usize, bottleneck: usize, noise_var: f64) -> Result<Self> {
        Self::new(input_dim, Vec::new(), DMatrix::zeros(bottleneck, 0), noise_var)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.outputs
    }

    /// Row `i` of `U`.
    pub fn output_row(&self, i: usize) -> Vec<f64> {
        self.outputs.row(i).iter().copied().collect()
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn bottleneck(&self) -> usize {
        self.outputs.nrows()
    }
}

/// Conditional moments of the latent pair `(h(x), h(y))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMoments {
    pub mean_x: Vec<f64>,
    pub mean_y: Vec<f64>,
    /// Conditional covariance entries, shared by all bottleneck dimensions.
    pub var_x: f64,
    pub var_y: f64,
    pub cov_xy: f64,
    /// `var_x + var_y - 2 cov_xy`, clamped at 0.
    pub delta_sq: f64,
}

/// Inner layer conditioned on the support, one posterior per bottleneck row.
#[derive(Debug, Clone)]
struct LatentConditional {
    support: SupportSet,
    inner: SEHyper,
    rows: Vec<GPPosterior<SEHyper>>,
}

impl LatentConditional {
    fn new(support: SupportSet, inner: SEHyper) -> Result<Self> {
        check_dim(support.input_dim(), inner.dim())?;
        let rows = (0..support.bottleneck())
            .map(|i| gp_condition(inner.clone(), support.inputs().to_vec(), support.output_row(i), support.noise_var()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { support, inner, rows })
    }

    fn moments(&self, x: &[f64], y: &[f64]) -> Result<LatentMoments> {
        let d = self.inner.dim();
        check_dim(d, x.len())?;
        check_dim(d, y.len())?;
        let mut mean_x = Vec::with_capacity(self.rows.len());
        let mut mean_y = Vec::with_capacity(self.rows.len());
        for post in &self.rows {
            mean_x.push(post.mean(x)?);
            mean_y.push(post.mean(y)?);
        }
        let shared = &self.rows[0];
        let var_x = shared.covariance(x, x)?;
        let var_y = shared.covariance(y, y)?;
        let cov_xy = shared.covariance(x, y)?;
        let raw = var_x + var_y - 2.0 * cov_xy;
        let delta_sq = if raw >= 0.0 {
            raw
        } else if raw >= -1e-10 {
            0.0
        } else {
            return Err(Error::Numerical(format!("conditional covariance is not PSD: delta^2 = {raw:e}")));
        };
        Ok(LatentMoments { mean_x, mean_y, var_x, var_y, cov_xy, delta_sq })
    }
}

/// Covariance of the two-layer SE composition with the inner layer
/// conditioned on a [`SupportSet`]:
///
/// `s2 * prod_i (1 + d^2/l_i^2)^(-1/2) exp(-(m_i(x) - m_i(y))^2 / (2 (l_i^2 + d^2)))`
///
/// where `m_i` are the conditional means per bottleneck row and `d^2` the
/// conditional variance of `h(x) - h(y)`. At unit outer lengthscale this is
/// `s2 * prod_i exp(-dm_i^2 / (2(1 + d^2))) / sqrt(1 + d^2)`.
#[derive(Debug, Clone)]
pub struct SupportKernel {
    latent: LatentConditional,
    outer: SEHyper,
}

impl SupportKernel {
    /// `outer` must have one lengthscale per bottleneck dimension.
    pub fn new(support: SupportSet, inner: SEHyper, outer: SEHyper) -> Result<Self> {
        check_dim(support.bottleneck(), outer.dim())?;
        Ok(Self { latent: LatentConditional::new(support, inner)?, outer })
    }

    pub fn support(&self) -> &SupportSet {
        &self.latent.support
    }

    pub fn inner(&self) -> &SEHyper {
        &self.latent.inner
    }

    pub fn outer(&self) -> &SEHyper {
        &self.outer
    }

    pub fn moments(&self, x: &[f64], y: &[f64]) -> Result<LatentMoments> {
        self.latent.moments(x, y)
    }
}

impl Kernel for SupportKernel {
    fn input_dim(&self) -> usize {
        self.latent.inner.dim()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let m = self.latent.moments(x, y)?;
        let d2 = m.delta_sq;
        let value = self
            .outer
            .lengthscales()
            .iter()
            .zip(m.mean_x.iter().zip(&m.mean_y))
            .map(|(l, (a, b))| {
                let l2 = l * l;
                let dm = a - b;
                (1.0 + d2 / l2).powf(-0.5) * (-dm * dm / (2.0 * (l2 + d2))).exp()
            })
            .product::<f64>();
        Ok(self.outer.amplitude_sq() * value)
    }
}

/// One-shot evaluation of [`SupportKernel`].
pub fn dgp_support_kernel(x: &[f64], y: &[f64], support: &SupportSet, inner: &SEHyper, outer: &SEHyper) -> Result<f64> {
    SupportKernel::new(support.clone(), inner.clone(), outer.clone())?.eval(x, y)
}

/// Covariance of the composition with a conditioned one-dimensional latent
/// layer and a spectral-mixture outer layer with scalar components
/// `(w_a, mu_a, s_a^2)`:
///
/// `sum_a w_a (1 + s_a^2 d^2)^(-1/2) exp(-(s_a^2 dm^2 + d^2 mu_a^2) / (2(1 + s_a^2 d^2))) cos(mu_a dm / (1 + s_a^2 d^2))`.
#[derive(Debug, Clone)]
pub struct SmSupportKernel {
    latent: LatentConditional,
    components: Vec<SMComponent>,
}

impl SmSupportKernel {
    pub fn new(support: SupportSet, inner: SEHyper, components: Vec<SMComponent>) -> Result<Self> {
        if support.bottleneck() != 1 {
            return Err(Error::Input(format!(
                "mixed-spectrum support kernel needs H = 1, got {}",
                support.bottleneck()
            )));
        }
        let dim = validate_mixture(&components)?;
        check_dim(1, dim)?;
        Ok(Self { latent: LatentConditional::new(support, inner)?, components })
    }

    pub fn components(&self) -> &[SMComponent] {
        &self.components
    }

    pub fn support(&self) -> &SupportSet {
        &self.latent.support
    }

    pub fn inner(&self) -> &SEHyper {
        &self.latent.inner
    }

    pub fn moments(&self, x: &[f64], y: &[f64]) -> Result<LatentMoments> {
        self.latent.moments(x, y)
    }
}

impl Kernel for SmSupportKernel {
    fn input_dim(&self) -> usize {
        self.latent.inner.dim()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let m = self.latent.moments(x, y)?;
        let d2 = m.delta_sq;
        let dm = m.mean_x[0] - m.mean_y[0];
        Ok(self
            .components
            .iter()
            .map(|c| {
                let s2 = c.scale()[0];
                let mu = c.mean()[0];
                let denom = 1.0 + s2 * d2;
                c.weight() / denom.sqrt()
                    * (-(s2 * dm * dm + d2 * mu * mu) / (2.0 * denom)).exp()
                    * (mu * dm / denom).cos()
            })
            .sum())
    }
}

/// One-shot evaluation of [`SmSupportKernel`].
pub fn sm_dgp_kernel(
    x: &[f64],
    y: &[f64],
    support: &SupportSet,
    inner: &SEHyper,
    comps: &[SMComponent],
) -> Result<f64> {
    SmSupportKernel::new(support.clone(), inner.clone(), comps.to_vec())?.eval(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{dgp_se_kernel, DGPHyper};
    use approx::assert_abs_diff_eq;

    fn support(h: usize, noise: f64) -> SupportSet {
        let z = vec![vec![-1.0], vec![0.2], vec![1.3]];
        let u = DMatrix::from_fn(h, 3, |i, j| ((i + 1) as f64 * 0.7 * (j as f64 - 1.0)).sin());
        SupportSet::new(1, z, u, noise).unwrap()
    }

    #[test]
    fn diagonal_equals_outer_amplitude() {
        let k =
            SupportKernel::new(support(2, 0.1), SEHyper::unit(1), SEHyper::isotropic(1.7, 0.8, 2).unwrap()).unwrap();
        assert_abs_diff_eq!(k.eval(&[0.45], &[0.45]).unwrap(), 1.7, epsilon = 1e-12);
        let s = SmSupportKernel::new(
            support(1, 0.1),
            SEHyper::unit(1),
            vec![
                SMComponent::new(0.3, vec![0.0], vec![1.0]).unwrap(),
                SMComponent::new(0.7, vec![2.0], vec![0.4]).unwrap(),
            ],
        )
        .unwrap();
        assert_abs_diff_eq!(s.eval(&[0.45], &[0.45]).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn support_points_collapse_to_support_values() {
        let sup = support(2, 0.0);
        let k = SupportKernel::new(sup.clone(), SEHyper::unit(1), SEHyper::unit(2)).unwrap();
        let (x, y) = (&sup.inputs()[0], &sup.inputs()[2]);
        let m = k.moments(x, y).unwrap();
        assert!(m.delta_sq.abs() < 1e-8);
        let u = sup.outputs();
        let d2: f64 = (0..2).map(|i| (u[(i, 0)] - u[(i, 2)]).powi(2)).sum();
        assert_abs_diff_eq!(k.eval(x, y).unwrap(), (-d2 / 2.0).exp(), epsilon = 1e-7);
    }

    #[test]
    fn empty_support_reduces_to_dgp_se() {
        let inner = SEHyper::new(0.8, vec![0.6]).unwrap();
        let outer = SEHyper::isotropic(1.4, 1.1, 3).unwrap();
        let empty = SupportSet::empty(1, 3, 0.0).unwrap();
        let hyper = DGPHyper::new(inner.clone(), outer.clone(), 3).unwrap();
        for &(x, y) in &[(0.0, 0.3), (-1.0, 2.0), (0.5, 0.5)] {
            assert_abs_diff_eq!(
                dgp_support_kernel(&[x], &[y], &empty, &inner, &outer).unwrap(),
                dgp_se_kernel(&[x], &[y], &hyper).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn single_zero_mean_component_matches_support_kernel() {
        let sup = support(1, 0.2);
        let comps = vec![SMComponent::new(1.0, vec![0.0], vec![1.0]).unwrap()];
        for &(x, y) in &[(0.0, 0.7), (-1.4, 0.9), (2.0, -2.0)] {
            let a = sm_dgp_kernel(&[x], &[y], &sup, &SEHyper::unit(1), &comps).unwrap();
            let b = dgp_support_kernel(&[x], &[y], &sup, &SEHyper::unit(1), &SEHyper::unit(1)).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn shape_errors() {
        assert!(SupportSet::new(1, vec![vec![0.0]], DMatrix::zeros(1, 2), 0.0).is_err());
        assert!(SupportSet::new(2, vec![vec![0.0]], DMatrix::zeros(1, 1), 0.0).is_err());
        assert!(SupportKernel::new(support(2, 0.1), SEHyper::unit(1), SEHyper::unit(1)).is_err());
        assert!(SmSupportKernel::new(support(2, 0.1), SEHyper::unit(1), vec![]).is_err());
    }
}
