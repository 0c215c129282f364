//! GP regression over any [`KernelSpec`]: marginal likelihood, prediction and
//! derivative-free hyperparameter search in log space.

use std::f64::consts::PI;

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::kernel::{
    gp_condition, DGPHyper, GPPosterior, KernelSpec, SEHyper, SMComponent, SmSupportKernel, SupportKernel,
};
use crate::rng::replica_rng;

/// A dataset, a kernel and an observation-noise variance.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub kernel: KernelSpec,
    pub noise_var: f64,
}

impl RegressionProblem {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>, kernel: KernelSpec, noise_var: f64) -> Result<Self> {
        use crate::kernel::Kernel;
        if inputs.is_empty() {
            return Err(Error::Input("regression needs at least one observation".into()));
        }
        check_dim(inputs.len(), targets.len())?;
        for x in &inputs {
            check_dim(kernel.input_dim(), x.len())?;
        }
        if inputs.iter().flatten().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::Input("inputs and targets must be finite".into()));
        }
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(Error::Input(format!("noise variance must be >= 0, got {noise_var}")));
        }
        Ok(Self { inputs, targets, kernel, noise_var })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn posterior(&self) -> Result<GPPosterior<KernelSpec>> {
        gp_condition(self.kernel.clone(), self.inputs.clone(), self.targets.clone(), self.noise_var)
    }
}

/// `-1/2 y^T (K + s_n^2 I)^{-1} y - 1/2 ln det(K + s_n^2 I) - N/2 ln 2 pi`.
pub fn log_marginal_likelihood(p: &RegressionProblem) -> Result<f64> {
    lml_of(&p.posterior()?)
}

fn lml_of(post: &GPPosterior<KernelSpec>) -> Result<f64> {
    let n = post.len() as f64;
    let quad = post.targets().dot(post.alpha());
    let v = -0.5 * quad - 0.5 * post.log_determinant() - 0.5 * n * (2.0 * PI).ln();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical("log marginal likelihood is not finite".into()))
    }
}

/// Posterior means and clamped variances of the latent function at `queries`.
pub fn predict(p: &RegressionProblem, queries: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    p.posterior()?.predict_marginal(queries)
}

/// Positive hyperparameters of a kernel in a fixed order:
///
/// * SE: amplitude, lengthscales
/// * SM: amplitude, component scales (weights and means stay fixed)
/// * deep SE and support kernels: inner amplitude, inner lengthscales,
///   outer amplitude, outer lengthscales
/// * mixed-spectrum support: inner amplitude, inner lengthscales, component scales
/// * NTK: none
pub fn kernel_hyperparameters(kernel: &KernelSpec) -> Vec<f64> {
    fn se(h: &SEHyper, out: &mut Vec<f64>) {
        out.push(h.amplitude_sq());
        out.extend_from_slice(h.lengthscales());
    }
    let mut out = Vec::new();
    match kernel {
        KernelSpec::SquaredExponential(h) => se(h, &mut out),
        KernelSpec::SpectralMixture { amplitude_sq, components } => {
            out.push(*amplitude_sq);
            components.iter().for_each(|c| out.extend_from_slice(c.scale()));
        }
        KernelSpec::DeepSE(h) => {
            se(h.inner(), &mut out);
            se(h.outer(), &mut out);
        }
        KernelSpec::Support(k) => {
            se(k.inner(), &mut out);
            se(k.outer(), &mut out);
        }
        KernelSpec::MixedSpectrumSupport(k) => {
            se(k.inner(), &mut out);
            k.components().iter().for_each(|c| out.extend_from_slice(c.scale()));
        }
        KernelSpec::DeepNtk { .. } => {}
    }
    out
}

/// Inverse of [`kernel_hyperparameters`].
pub fn with_hyperparameters(kernel: &KernelSpec, params: &[f64]) -> Result<KernelSpec> {
    check_dim(kernel_hyperparameters(kernel).len(), params.len())?;
    let mut it = params.iter().copied();
    let mut take_se = |dim: usize| -> Result<SEHyper> {
        let amp = it.next().unwrap_or_default();
        SEHyper::new(amp, it.by_ref().take(dim).collect())
    };
    Ok(match kernel {
        KernelSpec::SquaredExponential(h) => KernelSpec::SquaredExponential(take_se(h.dim())?),
        KernelSpec::SpectralMixture { components, .. } => {
            let amp = params[0];
            let comps = rebuild_components(components, &params[1..])?;
            KernelSpec::spectral_mixture(amp, comps)?
        }
        KernelSpec::DeepSE(h) => {
            let inner = take_se(h.inner().dim())?;
            let outer = take_se(h.outer().dim())?;
            KernelSpec::DeepSE(DGPHyper::new(inner, outer, h.bottleneck())?)
        }
        KernelSpec::Support(k) => {
            let inner = take_se(k.inner().dim())?;
            let outer = take_se(k.outer().dim())?;
            KernelSpec::Support(SupportKernel::new(k.support().clone(), inner, outer)?)
        }
        KernelSpec::MixedSpectrumSupport(k) => {
            let d = k.inner().dim();
            let inner = take_se(d)?;
            let comps = rebuild_components(k.components(), &params[1 + d..])?;
            KernelSpec::MixedSpectrumSupport(SmSupportKernel::new(k.support().clone(), inner, comps)?)
        }
        KernelSpec::DeepNtk { .. } => kernel.clone(),
    })
}

fn rebuild_components(components: &[SMComponent], scales: &[f64]) -> Result<Vec<SMComponent>> {
    let mut chunks = scales.chunks(components.first().map_or(1, |c| c.dim()));
    components
        .iter()
        .map(|c| SMComponent::new(c.weight(), c.mean().to_vec(), chunks.next().unwrap_or_default().to_vec()))
        .collect()
}

/// Settings for [`optimize_hyperparams`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    /// Box bounds applied to every hyperparameter (and the noise variance).
    pub lower: f64,
    pub upper: f64,
    /// Nelder-Mead iterations allowed per restart.
    pub max_iters: u64,
    /// Number of starts; the first is the initial configuration.
    pub restarts: usize,
    pub optimize_noise: bool,
    pub seed: u64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self { lower: 1e-3, upper: 1e3, max_iters: 400, restarts: 5, optimize_noise: true, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    /// The problem with the selected kernel and noise variance.
    pub problem: RegressionProblem,
    pub log_marginal_likelihood: f64,
    pub initial_log_marginal_likelihood: f64,
    /// Best objective reached by each restart, in restart order.
    pub restart_objectives: Vec<f64>,
    /// The selected restart stopped on the iteration budget.
    pub budget_exhausted: bool,
}

#[derive(Clone)]
struct Objective<'a> {
    base: &'a RegressionProblem,
    lower: f64,
    upper: f64,
    optimize_noise: bool,
}

impl Objective<'_> {
    fn decode(&self, logp: &[f64]) -> Result<RegressionProblem> {
        let vals: Vec<f64> = logp.iter().map(|v| v.exp().clamp(self.lower, self.upper)).collect();
        let (kernel_part, noise) = if self.optimize_noise {
            (&vals[..vals.len() - 1], vals[vals.len() - 1])
        } else {
            (&vals[..], self.base.noise_var)
        };
        let kernel = with_hyperparameters(&self.base.kernel, kernel_part)?;
        Ok(RegressionProblem { kernel, noise_var: noise, ..self.base.clone() })
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        // failed factorizations are treated as infinitely bad
        Ok(self.decode(p).and_then(|prob| log_marginal_likelihood(&prob)).map_or(f64::INFINITY, |v| -v))
    }
}

/// Maximize the log marginal likelihood over log-hyperparameters with
/// multi-start Nelder-Mead. The returned configuration is never worse than
/// the initial one.
pub fn optimize_hyperparams(p: &RegressionProblem, opts: &OptimizeOptions) -> Result<OptimizeResult> {
    if !(opts.lower > 0.0 && opts.upper > opts.lower && opts.upper.is_finite()) {
        return Err(Error::Input("bounds must satisfy 0 < lower < upper < inf".into()));
    }
    if opts.restarts == 0 {
        return Err(Error::Input("at least one restart is required".into()));
    }
    let initial = log_marginal_likelihood(p)?;
    let optimize_noise = opts.optimize_noise && p.noise_var > 0.0;
    let mut start: Vec<f64> =
        kernel_hyperparameters(&p.kernel).iter().map(|v| v.clamp(opts.lower, opts.upper).ln()).collect();
    if optimize_noise {
        start.push(p.noise_var.clamp(opts.lower, opts.upper).ln());
    }
    if start.is_empty() {
        return Ok(OptimizeResult {
            problem: p.clone(),
            log_marginal_likelihood: initial,
            initial_log_marginal_likelihood: initial,
            restart_objectives: vec![initial],
            budget_exhausted: false,
        });
    }
    let objective = Objective { base: p, lower: opts.lower, upper: opts.upper, optimize_noise };
    let (lo, hi) = (opts.lower.ln(), opts.upper.ln());
    let runs: Vec<(f64, Vec<f64>, bool)> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let origin: Vec<f64> = if r == 0 {
                start.clone()
            } else {
                let mut rng = replica_rng(opts.seed, r as u64);
                start
                    .iter()
                    .map(|s| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (s + z).clamp(lo, hi)
                    })
                    .collect()
            };
            run_simplex(&objective, origin, opts.max_iters)
        })
        .collect::<Result<_>>()?;
    let restart_objectives: Vec<f64> = runs.iter().map(|r| -r.0).collect();
    let (best_cost, best_param, exhausted) =
        runs.into_iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("at least one restart");
    if -best_cost > initial {
        Ok(OptimizeResult {
            problem: objective.decode(&best_param)?,
            log_marginal_likelihood: -best_cost,
            initial_log_marginal_likelihood: initial,
            restart_objectives,
            budget_exhausted: exhausted,
        })
    } else {
        Ok(OptimizeResult {
            problem: p.clone(),
            log_marginal_likelihood: initial,
            initial_log_marginal_likelihood: initial,
            restart_objectives,
            budget_exhausted: exhausted,
        })
    }
}

fn run_simplex(objective: &Objective<'_>, origin: Vec<f64>, max_iters: u64) -> Result<(f64, Vec<f64>, bool)> {
    let mut simplex = vec![origin.clone()];
    for i in 0..origin.len() {
        let mut v = origin.clone();
        v[i] += 0.5;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-8).map_err(|e| Error::Numerical(e.to_string()))?;
    let res = Executor::new(objective.clone(), solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let state = res.state();
    let exhausted =
        matches!(state.get_termination_status(), TerminationStatus::Terminated(TerminationReason::MaxItersReached));
    let param = state.get_best_param().cloned().unwrap_or(origin);
    Ok((state.get_best_cost(), param, exhausted))
}
