//! Cholesky factorization with escalating diagonal jitter.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// First jitter tried, relative to the mean diagonal.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter tried before giving up, relative to the mean diagonal.
pub const JITTER_MAX: f64 = 1e-4;

/// A Cholesky factor of `matrix + jitter * I`.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl JitteredCholesky {
    /// Factor a symmetric matrix, adding `1e-10 * mean_diag * 10^k` to the
    /// diagonal (k = 0..6) only when the plain factorization fails.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n != matrix.ncols() {
            return Err(Error::Dimension { expected: n, got: matrix.ncols() });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("matrix has non-finite entries".into()));
        }
        if let Some(chol) = matrix.clone().cholesky() {
            return Ok(Self { chol, jitter: 0.0 });
        }
        let mean_diag = if n == 0 { 0.0 } else { matrix.trace() / n as f64 };
        let base = if mean_diag > 0.0 { mean_diag } else { 1.0 };
        let mut rel = JITTER_START;
        while rel <= JITTER_MAX * (1.0 + 1e-9) {
            let jitter = rel * base;
            let mut m = matrix.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            if let Some(chol) = m.cholesky() {
                return Ok(Self { chol, jitter });
            }
            rel *= 10.0;
        }
        Err(Error::Numerical(condition_report(&matrix)))
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// Solve `L z = b` for the lower factor.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.l_dirty().solve_lower_triangular(b).expect("cholesky factor has a nonzero diagonal")
    }

    /// Solve `L^T z = b`.
    pub fn solve_upper(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.l_dirty().tr_solve_lower_triangular(b).expect("cholesky factor has a nonzero diagonal")
    }

    pub fn ln_determinant(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }
}

fn condition_report(matrix: &DMatrix<f64>) -> String {
    let eig = SymmetricEigen::new(matrix.clone()).eigenvalues;
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    format!(
        "cholesky failed after jitter up to {JITTER_MAX:e} x mean diagonal; \
         n = {}, eigenvalue range [{min:e}, {max:e}]",
        matrix.nrows()
    )
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(matrix: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(matrix.clone()).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(matrix: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(matrix.clone()).eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
