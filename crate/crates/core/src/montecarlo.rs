//! Monte Carlo estimators linking sampled networks to closed-form kernels,
//! and full-batch gradient-descent training.
//!
//! Replica `i` of an estimate keyed by `seed` draws from
//! [`replica_rng(seed, i)`](crate::rng::replica_rng); replicas run in parallel
//! and are reduced in index order, so estimates are bitwise reproducible.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::kernel::{kernel_matrix, KernelSpec, LatentMoments, SmSupportKernel, SupportKernel};
use crate::linalg::{dot, max_eigenvalue, JitteredCholesky};
use crate::network::{Differentiable, FeatureSampler, NetworkSampler, ShallowTrigNet, TrigNetwork};
use crate::rng::{replica_rng, SimRng};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub value: f64,
    /// Sample standard deviation over `sqrt(samples)`.
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
}

impl MCEstimate {
    pub fn from_values(values: &[f64], seed: u64) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::Input("an estimate needs at least 2 samples".into()));
        }
        let nf = n as f64;
        let mean = values.iter().sum::<f64>() / nf;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
        Ok(Self { value: mean, std_error: (var / nf).sqrt(), samples: n, seed })
    }

    /// `|value - target| <= k * std_error + allowance`.
    pub fn agrees_with(&self, target: f64, k: f64, allowance: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error + allowance
    }

    /// `(value - target) / std_error`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target) / self.std_error
    }
}

/// Evaluate `f` once per replica, in parallel, returning results in replica order.
pub fn replicate<T, F>(samples: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut SimRng) -> Result<T> + Sync,
{
    (0..samples).into_par_iter().map(|i| f(&mut replica_rng(seed, i as u64))).collect()
}

/// One estimate per column of a replica-by-statistic table.
pub fn column_estimates(rows: &[Vec<f64>], seed: u64) -> Result<Vec<MCEstimate>> {
    let width = rows.first().map_or(0, Vec::len);
    (0..width).map(|j| MCEstimate::from_values(&rows.iter().map(|r| r[j]).collect::<Vec<_>>(), seed)).collect()
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < 2 {
        return Err(Error::Input("at least 2 samples are required".into()));
    }
    Ok(())
}

/// Mean of `f(x) f(y)` over i.i.d. networks.
pub fn empirical_covariance<S: NetworkSampler>(
    sampler: &S,
    x: &[f64],
    y: &[f64],
    samples: usize,
    seed: u64,
) -> Result<MCEstimate> {
    let pts = [x.to_vec(), y.to_vec()];
    Ok(empirical_covariance_pairs(sampler, &pts, &[(0, 1)], samples, seed)?[0])
}

/// [`empirical_covariance`] for several index pairs into `points`, sharing
/// each network draw across all pairs.
pub fn empirical_covariance_pairs<S: NetworkSampler>(
    sampler: &S,
    points: &[Vec<f64>],
    pairs: &[(usize, usize)],
    samples: usize,
    seed: u64,
) -> Result<Vec<MCEstimate>> {
    check_samples(samples)?;
    check_pairs(points, pairs)?;
    let rows = replicate(samples, seed, |rng| {
        let net = sampler.sample(rng)?;
        let f = net.forward_batch(points)?;
        Ok(pairs.iter().map(|&(i, j)| f[i] * f[j]).collect())
    })?;
    column_estimates(&rows, seed)
}

/// Mean over i.i.d. networks of the tangent kernel `J(x) . J(y)`.
pub fn empirical_ntk<S>(sampler: &S, x: &[f64], y: &[f64], samples: usize, seed: u64) -> Result<MCEstimate>
where
    S: NetworkSampler,
    S::Net: Differentiable,
{
    let pts = [x.to_vec(), y.to_vec()];
    Ok(empirical_ntk_pairs(sampler, &pts, &[(0, 1)], samples, seed)?[0])
}

pub fn empirical_ntk_pairs<S>(
    sampler: &S,
    points: &[Vec<f64>],
    pairs: &[(usize, usize)],
    samples: usize,
    seed: u64,
) -> Result<Vec<MCEstimate>>
where
    S: NetworkSampler,
    S::Net: Differentiable,
{
    check_samples(samples)?;
    check_pairs(points, pairs)?;
    let rows = replicate(samples, seed, |rng| {
        let net = sampler.sample(rng)?;
        // one Jacobian per point, reused across pairs
        let jacs: Vec<Vec<f64>> = points.iter().map(|x| net.jacobian(x)).collect::<Result<_>>()?;
        Ok(pairs.iter().map(|&(i, j)| dot(&jacs[i], &jacs[j])).collect())
    })?;
    column_estimates(&rows, seed)
}

/// Real part of `E[exp(i t . f(X))]` for each row `t` of `ts`, with `f(X)`
/// the network evaluated at `inputs`.
pub fn empirical_charfn<S: NetworkSampler>(
    sampler: &S,
    inputs: &[Vec<f64>],
    ts: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> Result<Vec<MCEstimate>> {
    check_samples(samples)?;
    for t in ts {
        check_dim(inputs.len(), t.len())?;
    }
    let rows = replicate(samples, seed, |rng| {
        let f = sampler.sample(rng)?.forward_batch(inputs)?;
        Ok(ts.iter().map(|t| dot(t, &f).cos()).collect())
    })?;
    column_estimates(&rows, seed)
}

fn check_pairs(points: &[Vec<f64>], pairs: &[(usize, usize)]) -> Result<()> {
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= points.len() || j >= points.len()) {
        return Err(Error::Input(format!("pair ({i}, {j}) is out of range for {} points", points.len())));
    }
    Ok(())
}

/// Joint draw of `(h(x), h(y))` for bottleneck row `i` from its conditional law.
fn draw_latent_pair(m: &LatentMoments, i: usize, rng: &mut SimRng) -> (f64, f64) {
    let z1: f64 = StandardNormal.sample(rng);
    let z2: f64 = StandardNormal.sample(rng);
    let a = m.var_x.max(0.0).sqrt();
    let b = if a > 0.0 { m.cov_xy / a } else { 0.0 };
    let c = (m.var_y - b * b).max(0.0).sqrt();
    (m.mean_x[i] + a * z1, m.mean_y[i] + b * z1 + c * z2)
}

/// Two-stage oracle for [`SupportKernel`]: draw the conditioned latent pair,
/// then average the outer SE covariance `s2 prod_i exp(-(hx_i - hy_i)^2 / (2 l_i^2))`.
pub fn two_stage_support_covariance(
    kernel: &SupportKernel,
    x: &[f64],
    y: &[f64],
    samples: usize,
    seed: u64,
) -> Result<MCEstimate> {
    check_samples(samples)?;
    let m = kernel.moments(x, y)?;
    let outer = kernel.outer();
    let values = replicate(samples, seed, |rng| {
        let mut acc = outer.amplitude_sq();
        for (i, l) in outer.lengthscales().iter().enumerate() {
            let (hx, hy) = draw_latent_pair(&m, i, rng);
            acc *= (-0.5 * (hx - hy) * (hx - hy) / (l * l)).exp();
        }
        Ok(acc)
    })?;
    MCEstimate::from_values(&values, seed)
}

/// Two-stage oracle for [`SmSupportKernel`]: draw the conditioned latent
/// pair, then a width-`width` outer trig net with mixture features and unit
/// weight variance, and average `f(h(x)) f(h(y))`.
pub fn two_stage_sm_covariance(
    kernel: &SmSupportKernel,
    x: &[f64],
    y: &[f64],
    width: usize,
    samples: usize,
    seed: u64,
) -> Result<MCEstimate> {
    check_samples(samples)?;
    let m = kernel.moments(x, y)?;
    let features = FeatureSampler::mixture(kernel.components().to_vec())?;
    let values = replicate(samples, seed, |rng| {
        let (hx, hy) = draw_latent_pair(&m, 0, rng);
        let net = ShallowTrigNet::sample(&features, width, 1.0, rng)?;
        Ok(net.forward(&[hx])? * net.forward(&[hy])?)
    })?;
    MCEstimate::from_values(&values, seed)
}

/// Ridgeless GP mean under the deep NTK:
/// `K_*(K + 1e-8 trace(K)/N I)^{-1} y`.
pub fn ntk_regression_mean(
    queries: &[Vec<f64>],
    inputs: &[Vec<f64>],
    targets: &[f64],
    bottleneck: usize,
) -> Result<Vec<f64>> {
    check_dim(inputs.len(), targets.len())?;
    if inputs.is_empty() {
        return Err(Error::Input("NTK regression needs at least one observation".into()));
    }
    let dim = inputs[0].len();
    let kernel = KernelSpec::deep_ntk(dim, bottleneck)?;
    let mut gram = kernel_matrix(&kernel, inputs, None)?;
    let n = inputs.len();
    let jitter = 1e-8 * gram.trace() / n as f64;
    for i in 0..n {
        gram[(i, i)] += jitter;
    }
    let alpha = JitteredCholesky::new(gram)?.solve(&DVector::from_column_slice(targets));
    let cross = kernel_matrix(&kernel, queries, Some(inputs))?;
    Ok((cross * alpha).iter().copied().collect())
}

/// Gram matrix of the network's tangent kernel on `inputs`.
pub fn empirical_ntk_gram<N: Differentiable + ?Sized>(net: &N, inputs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let jacs: Vec<Vec<f64>> = inputs.iter().map(|x| net.jacobian(x)).collect::<Result<_>>()?;
    let n = jacs.len();
    Ok(DMatrix::from_fn(n, n, |i, j| dot(&jacs[i], &jacs[j])))
}

/// `||K_after - K_before||_F / ||K_before||_F` for the empirical tangent kernels.
pub fn ntk_drift<N: Differentiable + ?Sized>(before: &N, after: &N, inputs: &[Vec<f64>]) -> Result<f64> {
    let a = empirical_ntk_gram(before, inputs)?;
    let b = empirical_ntk_gram(after, inputs)?;
    Ok((&b - &a).norm() / a.norm())
}

/// Abort threshold for the training loss.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    /// Step size; `None` uses `1 / (2 lambda_max)` of the initial tangent-kernel Gram.
    pub lr: Option<f64>,
    pub steps: usize,
    /// Stop as soon as the loss falls to this value.
    pub loss_tol: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { lr: None, steps: 5000, loss_tol: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    /// Loss `1/2 sum (f(x_i) - y_i)^2` before each step, then after the last one.
    pub losses: Vec<f64>,
    pub params: Vec<f64>,
    pub lr: f64,
    /// Gradient steps actually taken.
    pub steps: usize,
    pub diverged: bool,
    pub converged: bool,
}

impl TrainTrace {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("trace holds at least the initial loss")
    }
}

/// Full-batch gradient descent on the weights of `net` (features frozen);
/// on return `net` holds the final weights.
pub fn gradient_descent_train<N: Differentiable>(
    net: &mut N,
    inputs: &[Vec<f64>],
    targets: &[f64],
    opts: &TrainOptions,
) -> Result<TrainTrace> {
    check_dim(inputs.len(), targets.len())?;
    if inputs.is_empty() {
        return Err(Error::Input("training needs at least one example".into()));
    }
    let lr = match opts.lr {
        Some(lr) if lr >= 0.0 && lr.is_finite() => lr,
        Some(lr) => return Err(Error::Input(format!("learning rate must be >= 0, got {lr}"))),
        None => 0.5 / max_eigenvalue(&empirical_ntk_gram(net, inputs)?),
    };
    let mut params = net.params();
    let mut losses = Vec::with_capacity(opts.steps + 1);
    let mut grad = vec![0.0; params.len()];
    let mut steps = 0;
    let mut diverged = false;
    let mut converged = false;
    loop {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (x, y) in inputs.iter().zip(targets) {
            let (f, jac) = net.value_and_jacobian(x)?;
            let r = f - y;
            loss += 0.5 * r * r;
            for (g, j) in grad.iter_mut().zip(&jac) {
                *g += r * j;
            }
        }
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            diverged = true;
            break;
        }
        losses.push(loss);
        if opts.loss_tol.is_some_and(|tol| loss <= tol) {
            converged = true;
            break;
        }
        if steps == opts.steps {
            break;
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= lr * g;
        }
        net.set_params(&params)?;
        steps += 1;
    }
    if losses.is_empty() {
        return Err(Error::Numerical("initial training loss is not finite".into()));
    }
    Ok(TrainTrace { losses, params, lr, steps, diverged, converged })
}
