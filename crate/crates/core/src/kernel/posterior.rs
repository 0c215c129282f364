use nalgebra::{DMatrix, DVector};

use super::{kernel_column, kernel_matrix, Kernel};
use crate::error::{check_dim, Error, Result};
use crate::linalg::JitteredCholesky;

/// Predictive variances in `[-VARIANCE_CLAMP_TOL, 0)` (relative to the prior
/// variance) are clamped to zero; anything more negative is an error.
pub const VARIANCE_CLAMP_TOL: f64 = 1e-10;

/// A zero-mean GP conditioned on noisy observations `(X, y)`.
#[derive(Debug, Clone)]
pub struct GPPosterior<K> {
    inputs: Vec<Vec<f64>>,
    targets: DVector<f64>,
    kernel: K,
    noise_var: f64,
    // None when there are no observations
    chol: Option<JitteredCholesky>,
    alpha: DVector<f64>,
}

/// Condition `kernel` on `(inputs, targets)` observed with Gaussian noise of
/// variance `noise_var`.
pub fn gp_condition<K: Kernel>(
    kernel: K,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    noise_var: f64,
) -> Result<GPPosterior<K>> {
    check_dim(inputs.len(), targets.len())?;
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::Input(format!("noise variance must be >= 0, got {noise_var}")));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Input("targets must be finite".into()));
    }
    let targets = DVector::from_vec(targets);
    if inputs.is_empty() {
        return Ok(GPPosterior { inputs, targets, kernel, noise_var, chol: None, alpha: DVector::zeros(0) });
    }
    let mut gram = kernel_matrix(&kernel, &inputs, None)?;
    for i in 0..inputs.len() {
        gram[(i, i)] += noise_var;
    }
    let chol = JitteredCholesky::new(gram)?;
    let alpha = chol.solve(&targets);
    Ok(GPPosterior { inputs, targets, kernel, noise_var, chol: Some(chol), alpha })
}

impl<K: Kernel> GPPosterior<K> {
    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
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

    /// Jitter added on top of `noise_var` during factorization.
    pub fn jitter(&self) -> f64 {
        self.chol.as_ref().map_or(0.0, |c| c.jitter())
    }

    /// Lower Cholesky factor of `K(X) + (noise_var + jitter) I`.
    pub fn cholesky_factor(&self) -> Option<DMatrix<f64>> {
        self.chol.as_ref().map(|c| c.l())
    }

    /// `ln det(K(X) + noise I)` (0 without observations).
    pub fn log_determinant(&self) -> f64 {
        self.chol.as_ref().map_or(0.0, |c| c.ln_determinant())
    }

    /// `(K(X) + noise I)^{-1} y`.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        if self.inputs.is_empty() {
            check_dim(self.kernel.input_dim(), x.len())?;
            return Ok(0.0);
        }
        Ok(kernel_column(&self.kernel, &self.inputs, x)?.dot(&self.alpha))
    }

    /// Posterior mean vector and full covariance at `queries`.
    pub fn predict(&self, queries: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let prior = kernel_matrix(&self.kernel, queries, None)?;
        let Some(chol) = &self.chol else {
            return Ok((DVector::zeros(queries.len()), prior));
        };
        let cross = kernel_matrix(&self.kernel, &self.inputs, Some(queries))?;
        let means = cross.transpose() * &self.alpha;
        let l = chol.l();
        let v = l.solve_lower_triangular(&cross).ok_or_else(|| Error::Numerical("singular cholesky factor".into()))?;
        let cov = prior - v.transpose() * v;
        Ok((means, cov))
    }

    /// Posterior means and marginal variances, with variances clamped at 0.
    pub fn predict_marginal(&self, queries: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut means = Vec::with_capacity(queries.len());
        let mut vars = Vec::with_capacity(queries.len());
        for q in queries {
            let (m, v) = self.predict_point(q)?;
            means.push(m);
            vars.push(v);
        }
        Ok((means, vars))
    }

    /// Posterior mean and clamped variance at one point.
    pub fn predict_point(&self, x: &[f64]) -> Result<(f64, f64)> {
        let prior = self.kernel.eval(x, x)?;
        let Some(chol) = &self.chol else {
            return Ok((0.0, prior));
        };
        let kx = kernel_column(&self.kernel, &self.inputs, x)?;
        let mean = kx.dot(&self.alpha);
        let v = chol.solve_lower(&kx);
        let var = clamp_variance(prior - v.dot(&v), prior)?;
        Ok((mean, var))
    }

    /// Posterior covariance `Sigma_*(x, y)`.
    pub fn covariance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let prior = self.kernel.eval(x, y)?;
        let Some(chol) = &self.chol else {
            return Ok(prior);
        };
        let kx = kernel_column(&self.kernel, &self.inputs, x)?;
        let ky = kernel_column(&self.kernel, &self.inputs, y)?;
        let vx = chol.solve_lower(&kx);
        let vy = chol.solve_lower(&ky);
        Ok(prior - vx.dot(&vy))
    }
}

pub(crate) fn clamp_variance(v: f64, scale: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= -VARIANCE_CLAMP_TOL * scale.abs().max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!("negative predictive variance {v:e}")))
    }
}
