//! Marginal densities and characteristic functions of network outputs.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use quadrature::double_exponential;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, check_positive, Error, Result};
use crate::kernel::{kernel_matrix, Kernel};
use crate::linalg::{dot, JitteredCholesky};
use crate::montecarlo::{replicate, MCEstimate};
use crate::network::{NetworkSampler, PhaseShiftSpec, TrigNetwork};
use crate::rng::SimRng;

/// Density of the Laplace law `exp(-|f|/k) / 2k` with `k = s1 s2 |x|`, the
/// output law of the linear net `f = W Omega x` with two hidden units.
pub fn laplace_marginal_pdf(f: f64, sigma1: f64, sigma2: f64, x_norm: f64) -> Result<f64> {
    let kappa = laplace_scale(sigma1, sigma2, x_norm)?;
    Ok((-f.abs() / kappa).exp() / (2.0 * kappa))
}

pub fn laplace_marginal_cdf(f: f64, sigma1: f64, sigma2: f64, x_norm: f64) -> Result<f64> {
    let kappa = laplace_scale(sigma1, sigma2, x_norm)?;
    let tail = 0.5 * (-f.abs() / kappa).exp();
    Ok(if f < 0.0 { tail } else { 1.0 - tail })
}

fn laplace_scale(sigma1: f64, sigma2: f64, x_norm: f64) -> Result<f64> {
    check_positive("sigma1", sigma1)?;
    check_positive("sigma2", sigma2)?;
    if x_norm == 0.0 {
        return Err(Error::Input("|x| = 0 gives a degenerate point mass".into()));
    }
    check_positive("|x|", x_norm)?;
    Ok(sigma1 * sigma2 * x_norm)
}

/// One draw of `W Omega x` with `Omega` (2 x D) entries `N(0, s1^2)` and
/// `W` (1 x 2) entries `N(0, s2^2)`.
pub fn sample_linear_net_output(sigma1: f64, sigma2: f64, x: &[f64], rng: &mut SimRng) -> f64 {
    (0..2)
        .map(|_| {
            let proj: f64 = x
                .iter()
                .map(|xi| {
                    let z: f64 = StandardNormal.sample(rng);
                    sigma1 * z * xi
                })
                .sum();
            let w: f64 = StandardNormal.sample(rng);
            sigma2 * w * proj
        })
        .sum()
}

/// `N(f | 0, weight_var)`: the single-input law of a shallow trig net.
pub fn shallow_marginal_pdf(f: f64, weight_var: f64) -> Result<f64> {
    check_positive("weight variance", weight_var)?;
    Ok((-0.5 * f * f / weight_var).exp() / (2.0 * PI * weight_var).sqrt())
}

/// Kolmogorov-Smirnov distance between the empirical law of `samples` and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = cdf(v);
            (c - i as f64 / n).abs().max((((i + 1) as f64) / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Sample skewness.
pub fn skewness(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Relative accuracy requested from the adaptive quadrature.
pub const QUADRATURE_REL_TOL: f64 = 1e-8;
// features are integrated over +-CUTOFF standard deviations
const CUTOFF: f64 = 12.0;

// composite rule: one adaptive double-exponential pass per unit-width panel
fn integrate_1d<F: Fn(f64) -> f64>(f: F, abs_tol: f64) -> Result<f64> {
    let panels = (2.0 * CUTOFF) as usize;
    let panel_tol = abs_tol / panels as f64;
    let mut total = 0.0;
    let mut error = 0.0;
    for k in 0..panels {
        let a = -CUTOFF + k as f64;
        let out = double_exponential::integrate(&f, a, a + 1.0, panel_tol);
        total += out.integral;
        error += out.error_estimate;
    }
    if !total.is_finite() || error > abs_tol.max(QUADRATURE_REL_TOL * total.abs()) {
        return Err(Error::Numerical(format!("quadrature did not converge: estimate {total} with error {error:e}")));
    }
    Ok(total)
}

fn std_normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
}

/// Characteristic function of the phase-shifted trig net output at one input,
///
/// `exp(-q^2 s^2 / 2) E_omega[exp(q^2 s^2 sin(psi(x)) sin(2 omega . x) / 2)]`,
///
/// with `omega ~ N(0, feature_var I)`, by adaptive quadrature (`D <= 2`).
pub fn phase_shift_charfn_numeric(
    q: f64,
    x: &[f64],
    psi: &PhaseShiftSpec,
    weight_var: f64,
    feature_var: f64,
) -> Result<f64> {
    check_positive("weight variance", weight_var)?;
    check_positive("feature variance", feature_var)?;
    let c = 0.5 * q * q * weight_var * psi.eval(x)?.sin();
    let sf = feature_var.sqrt();
    let gauss = (-0.5 * q * q * weight_var).exp();
    let tol = 0.1 * QUADRATURE_REL_TOL * c.abs().exp().recip();
    let integral = match x.len() {
        1 => integrate_1d(|t| std_normal_pdf(t) * (c * (2.0 * sf * t * x[0]).sin()).exp(), tol)?,
        2 => {
            let inner = |t1: f64| {
                integrate_1d(
                    |t2| std_normal_pdf(t2) * (c * (2.0 * sf * (t1 * x[0] + t2 * x[1])).sin()).exp(),
                    0.1 * tol,
                )
            };
            // errors inside the inner integral surface as NaN and fail the outer check
            integrate_1d(|t1| std_normal_pdf(t1) * inner(t1).unwrap_or(f64::NAN), tol)?
        }
        d => {
            return Err(Error::Input(format!(
                "numeric characteristic function supports D <= 2, got {d}; use the Monte Carlo variant"
            )))
        }
    };
    Ok(gauss * integral)
}

/// Monte Carlo version of [`phase_shift_charfn_numeric`] over `omega` draws (any `D`).
pub fn phase_shift_charfn_mc(
    q: f64,
    x: &[f64],
    psi: &PhaseShiftSpec,
    weight_var: f64,
    feature_var: f64,
    samples: usize,
    seed: u64,
) -> Result<MCEstimate> {
    check_positive("weight variance", weight_var)?;
    check_positive("feature variance", feature_var)?;
    let c = 0.5 * q * q * weight_var * psi.eval(x)?.sin();
    let sf = feature_var.sqrt();
    let gauss = (-0.5 * q * q * weight_var).exp();
    let values = replicate(samples, seed, |rng| {
        let proj: f64 = x
            .iter()
            .map(|xi| {
                let z: f64 = StandardNormal.sample(rng);
                sf * z * xi
            })
            .sum();
        Ok(gauss * (c * (2.0 * proj).sin()).exp())
    })?;
    MCEstimate::from_values(&values, seed)
}

/// Nodes and weights of the order-3 Gauss-Hermite rule (weight `exp(-t^2)`).
pub fn gauss_hermite_rule() -> ([f64; 3], [f64; 3]) {
    let z1 = 1.5f64.sqrt();
    let sp = PI.sqrt();
    ([-z1, 0.0, z1], [sp / 6.0, 2.0 * sp / 3.0, sp / 6.0])
}

/// Constants of the order-3 Gauss-Hermite truncation: centre weight `lambda0`,
/// outer weight `lambda1` and outer node `z1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussHermiteConstants {
    pub lambda0: f64,
    pub lambda1: f64,
    pub z1: f64,
    pub order: usize,
}

impl GaussHermiteConstants {
    /// Two-decimal values (1.18, 0.30, 1.22).
    pub fn printed() -> Self {
        Self { lambda0: 1.18, lambda1: 0.30, z1: 1.22, order: 3 }
    }

    /// Values from the Hermite roots and weights.
    pub fn exact() -> Self {
        let (nodes, weights) = gauss_hermite_rule();
        Self { lambda0: weights[1], lambda1: weights[2], z1: nodes[2], order: 3 }
    }

    /// Value of the truncation at `q = 0` for dimension `D`.
    pub fn normalization(&self, dim: usize) -> f64 {
        (self.lambda0 / PI.sqrt()).powi(dim as i32) * (1.0 + 2.0 * dim as f64 * self.lambda1 / self.lambda0)
    }
}

/// Truncated Gauss-Hermite approximation of [`phase_shift_charfn_numeric`]
/// for isotropic features:
///
/// `exp(-q^2 s^2/2) (l0/sqrt(pi))^D {1 + 2 (l1/l0) sum_d cosh[q^2 s^2 sin(psi(x)) sin(2 sqrt(2) s_F z1 x_d) / 2]}`.
///
/// This keeps only the first-order terms of the order-3 product rule, so it
/// is not exact even at `q = 0`.
pub fn phase_shift_charfn_gh(
    q: f64,
    x: &[f64],
    psi: &PhaseShiftSpec,
    weight_var: f64,
    feature_var: f64,
    consts: &GaussHermiteConstants,
) -> Result<f64> {
    check_positive("weight variance", weight_var)?;
    check_positive("feature variance", feature_var)?;
    if x.is_empty() {
        return Err(Error::Input("input dimension must be >= 1".into()));
    }
    let c = 0.5 * q * q * weight_var * psi.eval(x)?.sin();
    let sf = feature_var.sqrt();
    let sum: f64 = x.iter().map(|xd| (c * (2.0 * SQRT_2 * sf * consts.z1 * xd).sin()).cosh()).sum();
    let pref = (consts.lambda0 / PI.sqrt()).powi(x.len() as i32);
    Ok((-0.5 * q * q * weight_var).exp() * pref * (1.0 + 2.0 * consts.lambda1 / consts.lambda0 * sum))
}

/// `exp(-t^T K t / 2)`: the Gaussian characteristic function with covariance `K`.
pub fn dgp_charfn_lower_bound(t: &[f64], k: &DMatrix<f64>) -> Result<f64> {
    check_dim(k.nrows(), t.len())?;
    check_dim(k.ncols(), t.len())?;
    let tv = DVector::from_column_slice(t);
    Ok((-0.5 * (tv.transpose() * k * &tv)[0]).exp())
}

/// `N(0 | 0, K)`.
pub fn gaussian_density_at_origin(k: &DMatrix<f64>) -> Result<f64> {
    let n = k.nrows() as f64;
    let chol = JitteredCholesky::new(k.clone())?;
    Ok((-0.5 * chol.ln_determinant() - 0.5 * n * (2.0 * PI).ln()).exp())
}

/// Ball-count estimate of the joint density of `f(x_1..x_N)` at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityAtOrigin {
    pub radius: f64,
    /// `P(max_i |f(x_i)| < radius) / (2 radius)^N`.
    pub estimate: f64,
    pub std_error: f64,
    pub hits: usize,
    /// No draw landed in the ball.
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroConcentration {
    pub empirical: DensityAtOrigin,
    pub gaussian_ref: f64,
    /// The same draws counted at half and at twice the radius.
    pub sensitivity: [DensityAtOrigin; 2],
    pub samples: usize,
    pub seed: u64,
}

impl ZeroConcentration {
    /// `empirical >= gaussian_ref - k * std_error` and the estimate is usable.
    pub fn at_least_reference(&self, k: f64) -> bool {
        !self.empirical.unreliable && self.empirical.estimate >= self.gaussian_ref - k * self.empirical.std_error
    }
}

/// Compare the network's density at `f = 0` on `inputs` with the Gaussian
/// density `N(0 | 0, K)` where `K` is `reference` evaluated on `inputs`.
pub fn zero_concentration_check<S: NetworkSampler, K: Kernel + ?Sized>(
    sampler: &S,
    reference: &K,
    inputs: &[Vec<f64>],
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<ZeroConcentration> {
    check_positive("ball radius", radius)?;
    if inputs.is_empty() {
        return Err(Error::Input("at least one input is required".into()));
    }
    let gaussian_ref = gaussian_density_at_origin(&kernel_matrix(reference, inputs, None)?)?;
    let maxima = replicate(samples, seed, |rng| {
        let f = sampler.sample(rng)?.forward_batch(inputs)?;
        Ok(f.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    })?;
    let n = inputs.len() as i32;
    let count = |r: f64| {
        let hits = maxima.iter().filter(|&&m| m < r).count();
        let p = hits as f64 / samples as f64;
        let vol = (2.0 * r).powi(n);
        DensityAtOrigin {
            radius: r,
            estimate: p / vol,
            std_error: (p * (1.0 - p) / samples as f64).sqrt() / vol,
            hits,
            unreliable: hits == 0,
        }
    };
    Ok(ZeroConcentration {
        empirical: count(radius),
        gaussian_ref,
        sensitivity: [count(0.5 * radius), count(2.0 * radius)],
        samples,
        seed,
    })
}

/// Real part of the empirical characteristic function `mean cos(t . f_s)` of
/// precomputed output vectors.
pub fn empirical_charfn_of(outputs: &[Vec<f64>], t: &[f64], seed: u64) -> Result<MCEstimate> {
    let values: Vec<f64> = outputs.iter().map(|f| dot(t, f).cos()).collect();
    MCEstimate::from_values(&values, seed)
}

/// Outputs of `samples` networks at `inputs`, one row per network.
pub fn sample_outputs<S: NetworkSampler>(
    sampler: &S,
    inputs: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    replicate(samples, seed, |rng| sampler.sample(rng)?.forward_batch(inputs))
}
