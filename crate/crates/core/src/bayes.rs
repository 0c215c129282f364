//! Bayesian linear regression on trig features `Phi(Omega x)` with prior
//! `w ~ N(0, s^2 I)` and Gaussian observation noise `s_n^2`.
//!
//! The posterior precision is `A = Phi Phi^T / s_n^2 + I / s^2` where the
//! columns of `Phi` are the feature maps of the observed inputs. With `2n`
//! weights and `M` observations the primal route factors `A` (`2n x 2n`) and
//! the dual route factors `B = s^2 Phi^T Phi + s_n^2 I` (`M x M`).

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, check_positive, Error, Result};
use crate::kernel::posterior::clamp_variance;
use crate::linalg::JitteredCholesky;
use crate::network::{standard_normals, trig_feature_map, Features};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveStrategy {
    /// Dual when `2n > M`, primal otherwise.
    #[default]
    Auto,
    Primal,
    Dual,
}

#[derive(Debug, Clone)]
enum Factor {
    Prior,
    Primal(JitteredCholesky),
    Dual(JitteredCholesky),
}

/// Gaussian posterior over the `2n` weights of a shallow trig net.
#[derive(Debug, Clone)]
pub struct WeightPosterior {
    design: DMatrix<f64>,
    mean: DVector<f64>,
    prior_var: f64,
    noise_var: f64,
    factor: Factor,
}

/// Posterior with the default [`SolveStrategy::Auto`].
pub fn weight_posterior(
    features: &Features,
    inputs: &[Vec<f64>],
    targets: &[f64],
    prior_var: f64,
    noise_var: f64,
) -> Result<WeightPosterior> {
    weight_posterior_with(features, inputs, targets, prior_var, noise_var, SolveStrategy::Auto)
}

pub fn weight_posterior_with(
    features: &Features,
    inputs: &[Vec<f64>],
    targets: &[f64],
    prior_var: f64,
    noise_var: f64,
    strategy: SolveStrategy,
) -> Result<WeightPosterior> {
    check_positive("prior variance", prior_var)?;
    check_positive("noise variance", noise_var)?;
    check_dim(inputs.len(), targets.len())?;
    let p = 2 * features.rows();
    let m = inputs.len();
    let mut design = DMatrix::zeros(p, m);
    for (j, z) in inputs.iter().enumerate() {
        design.set_column(j, &DVector::from_vec(trig_feature_map(features, z)?));
    }
    let u = DVector::from_column_slice(targets);
    if m == 0 {
        return Ok(WeightPosterior { design, mean: DVector::zeros(p), prior_var, noise_var, factor: Factor::Prior });
    }
    let use_dual = match strategy {
        SolveStrategy::Auto => p > m,
        SolveStrategy::Primal => false,
        SolveStrategy::Dual => true,
    };
    let (mean, factor) = if use_dual {
        let mut b = design.tr_mul(&design) * prior_var;
        for i in 0..m {
            b[(i, i)] += noise_var;
        }
        let chol = JitteredCholesky::new(b)?;
        let mean = &design * chol.solve(&u) * prior_var;
        (mean, Factor::Dual(chol))
    } else {
        let chol = JitteredCholesky::new(precision_of(&design, prior_var, noise_var))?;
        let mean = chol.solve(&(&design * &u)) / noise_var;
        (mean, Factor::Primal(chol))
    };
    Ok(WeightPosterior { design, mean, prior_var, noise_var, factor })
}

fn precision_of(design: &DMatrix<f64>, prior_var: f64, noise_var: f64) -> DMatrix<f64> {
    let mut a = design * design.transpose() / noise_var;
    for i in 0..a.nrows() {
        a[(i, i)] += 1.0 / prior_var;
    }
    a
}

impl WeightPosterior {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `A`, assembled on demand (`2n x 2n`).
    pub fn precision(&self) -> DMatrix<f64> {
        precision_of(&self.design, self.prior_var, self.noise_var)
    }

    pub fn prior_var(&self) -> f64 {
        self.prior_var
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Number of weights `2n`.
    pub fn dim(&self) -> usize {
        self.design.nrows()
    }

    /// Number of conditioning observations `M`.
    pub fn observations(&self) -> usize {
        self.design.ncols()
    }

    /// The route actually taken (`Auto` only for the prior, `M = 0`).
    pub fn strategy(&self) -> SolveStrategy {
        match self.factor {
            Factor::Prior => SolveStrategy::Auto,
            Factor::Primal(_) => SolveStrategy::Primal,
            Factor::Dual(_) => SolveStrategy::Dual,
        }
    }

    /// `phi^T A^{-1} phi`.
    pub fn quadratic_form(&self, phi: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), phi.len())?;
        Ok(match &self.factor {
            Factor::Prior => self.prior_var * phi.norm_squared(),
            Factor::Primal(chol) => chol.solve_lower(phi).norm_squared(),
            Factor::Dual(chol) => {
                let v = chol.solve_lower(&self.design.tr_mul(phi));
                self.prior_var * phi.norm_squared() - self.prior_var * self.prior_var * v.norm_squared()
            }
        })
    }

    /// One draw from `N(mean, A^{-1})`. The dual route uses pathwise
    /// conditioning of a prior draw, so `A` is never formed.
    pub fn sample(&self, rng: &mut SimRng) -> DVector<f64> {
        let p = self.dim();
        let sd = self.prior_var.sqrt();
        match &self.factor {
            Factor::Prior => DVector::from_vec(standard_normals(rng, p, sd)),
            Factor::Primal(chol) => {
                let eps = DVector::from_vec(standard_normals(rng, p, 1.0));
                &self.mean + chol.solve_upper(&eps)
            }
            Factor::Dual(chol) => {
                let w0 = DVector::from_vec(standard_normals(rng, p, sd));
                let e = DVector::from_vec(standard_normals(rng, self.observations(), self.noise_var.sqrt()));
                let resid = self.design.tr_mul(&w0) + e;
                let correction = &self.design * chol.solve(&resid) * self.prior_var;
                &self.mean + w0 - correction
            }
        }
    }
}

/// Weight-space predictive mean `w . Phi(Omega x)` and variance
/// `s_n^2 + Phi^T A^{-1} Phi`.
pub fn predict_weight_space(post: &WeightPosterior, features: &Features, x: &[f64]) -> Result<(f64, f64)> {
    let phi = DVector::from_vec(trig_feature_map(features, x)?);
    check_dim(post.dim(), phi.len())?;
    let mean = post.mean.dot(&phi);
    let var = post.noise_var + clamp_variance(post.quadratic_form(&phi)?, post.prior_var)?;
    Ok((mean, var))
}

/// Kernel-space predictive with `K(a, b) = s^2 Phi(a) . Phi(b)`:
/// mean `K_* (s_n^2 I + K)^{-1} u`, variance `s_n^2 + K_** - K_* (s_n^2 I + K)^{-1} K_*^T`.
pub fn predict_kernel_space(
    features: &Features,
    inputs: &[Vec<f64>],
    targets: &[f64],
    x: &[f64],
    prior_var: f64,
    noise_var: f64,
) -> Result<(f64, f64)> {
    check_positive("prior variance", prior_var)?;
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::Input(format!("noise variance must be >= 0, got {noise_var}")));
    }
    check_dim(inputs.len(), targets.len())?;
    if inputs.is_empty() {
        return Err(Error::Input("kernel-space prediction needs at least one observation".into()));
    }
    let m = inputs.len();
    let cols: Vec<DVector<f64>> =
        inputs.iter().map(|z| trig_feature_map(features, z).map(DVector::from_vec)).collect::<Result<_>>()?;
    let design = DMatrix::from_columns(&cols);
    let phi = DVector::from_vec(trig_feature_map(features, x)?);
    let mut gram = design.tr_mul(&design) * prior_var;
    for i in 0..m {
        gram[(i, i)] += noise_var;
    }
    let chol = JitteredCholesky::new(gram)?;
    let k_star = design.tr_mul(&phi) * prior_var;
    let k_ss = prior_var * phi.norm_squared();
    let mean = k_star.dot(&chol.solve(&DVector::from_column_slice(targets)));
    let v = chol.solve_lower(&k_star);
    let var = noise_var + clamp_variance(k_ss - v.norm_squared(), k_ss)?;
    Ok((mean, var))
}
