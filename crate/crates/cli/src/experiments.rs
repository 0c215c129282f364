//! The six experiments. Each writes its CSV tables into the output directory
//! and returns summary values for the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use trigkernel::distribution::{
    ks_statistic, laplace_marginal_cdf, laplace_marginal_pdf, phase_shift_charfn_gh, phase_shift_charfn_mc,
    phase_shift_charfn_numeric, sample_linear_net_output, sample_outputs, shallow_marginal_pdf, skewness,
    GaussHermiteConstants,
};
use trigkernel::gp::{
    kernel_hyperparameters, log_marginal_likelihood, optimize_hyperparams, predict, OptimizeOptions, RegressionProblem,
};
use trigkernel::kernel::{ntk_dgp_kernel, DGPHyper, Kernel, KernelSpec, SEHyper};
use trigkernel::montecarlo::{
    column_estimates, empirical_covariance_pairs, empirical_ntk_pairs, gradient_descent_train, ntk_drift,
    ntk_regression_mean, replicate, TrainOptions,
};
use trigkernel::network::{
    trig_feature_map, DeepSampler, DeepTrigNet, FeatureSampler, NetworkSampler, PhaseShiftSpec, ShallowSampler,
    TrigNetwork,
};
use trigkernel::rng::{derive_seed, seeded_rng};

use crate::config::{
    build_components, require_positive, require_samples, resolve_pairs, CharfnConfig, CovarianceConfig, FitConfig,
    FitKernel, MarginalConfig, MarginalKind, NetworkKind, NtkConfig, TrainConfig,
};
use crate::data::{load_columns, load_csv, read_header, write_table, Table};
use crate::error::CliError;

pub struct RunContext {
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: BTreeMap<String, String>,
}

impl Outcome {
    fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.insert(key.to_owned(), value.to_string());
    }
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| (*s).to_owned()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn require_widths(name: &str, widths: &[usize]) -> Result<(), CliError> {
    if widths.is_empty() {
        return Err(CliError::Config(format!("{name} must list at least one width")));
    }
    widths.iter().try_for_each(|&w| require_positive(name, w))
}

fn se_or_unit(se: Option<&crate::config::SeConfig>, dim: usize) -> Result<SEHyper, CliError> {
    se.map_or(Ok(SEHyper::unit(dim)), |s| s.build())
}

fn shallow_sampler(cfg: &CovarianceConfig, width: usize) -> Result<ShallowSampler, CliError> {
    match cfg.network {
        NetworkKind::Shallow => {
            let se = cfg.kernel.as_ref().ok_or_else(|| CliError::Config("covariance.kernel is required".into()))?;
            Ok(ShallowSampler::se(&se.build()?, width)?)
        }
        _ => {
            let comps = cfg
                .components
                .as_deref()
                .ok_or_else(|| CliError::Config("covariance.components is required for mixture networks".into()))?;
            Ok(ShallowSampler::new(FeatureSampler::mixture(build_components(comps)?)?, width, cfg.amplitude_sq)?)
        }
    }
}

/// Empirical covariance against the limiting kernel, one row per width and pair.
/// Shallow networks also report `kernel_rmse`, the root mean square error of
/// each sampled network's own feature kernel `s^2 Phi(x) . Phi(y)`.
pub fn covariance(cfg: &CovarianceConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    require_samples("covariance.samples", cfg.samples)?;
    require_widths("covariance.widths", &cfg.widths)?;
    let pairs = resolve_pairs(&cfg.points, cfg.pairs.as_deref())?;
    let pts = &cfg.points;
    let deep = cfg.network == NetworkKind::Deep;
    let mut cols = vec!["width", "i", "j", "empirical", "std_error", "closed_form", "abs_error"];
    if !deep {
        cols.push("kernel_rmse");
    }
    let mut table = Table::new(header(&cols));
    let mut out = Outcome::default();
    for &w in &cfg.widths {
        let seed = derive_seed(ctx.seed, w as u64);
        if deep {
            let inner = se_or_unit(cfg.kernel.as_ref(), pts[0].len())?;
            let outer = cfg
                .outer
                .as_ref()
                .ok_or_else(|| CliError::Config("covariance.outer is required for deep networks".into()))?
                .build()?;
            let hyper = DGPHyper::new(inner, outer.clone(), outer.dim())?;
            let sampler = DeepSampler::new(hyper.clone(), w, w)?;
            let est = empirical_covariance_pairs(&sampler, pts, &pairs, cfg.samples, seed)?;
            for (&(i, j), e) in pairs.iter().zip(&est) {
                let k = hyper.eval(&pts[i], &pts[j])?;
                table.push(vec![w as f64, i as f64, j as f64, e.value, e.std_error, k, (e.value - k).abs()]);
            }
            out.note("kernel", "dgp");
        } else {
            let sampler = shallow_sampler(cfg, w)?;
            let limit = sampler.limit_kernel();
            let targets: Vec<f64> =
                pairs.iter().map(|&(i, j)| limit.eval(&pts[i], &pts[j])).collect::<Result<_, _>>()?;
            let rows = replicate(cfg.samples, seed, |rng| {
                let net = sampler.sample(rng)?;
                let f = net.forward_batch(pts)?;
                let phi: Vec<Vec<f64>> =
                    pts.iter().map(|p| trig_feature_map(net.features(), p)).collect::<Result<_, _>>()?;
                let mut row: Vec<f64> = pairs.iter().map(|&(i, j)| f[i] * f[j]).collect();
                row.extend(
                    pairs
                        .iter()
                        .zip(&targets)
                        .map(|(&(i, j), k)| (net.weight_var() * dot(&phi[i], &phi[j]) - k).powi(2)),
                );
                Ok(row)
            })?;
            let est = column_estimates(&rows, seed)?;
            let p = pairs.len();
            for (idx, &(i, j)) in pairs.iter().enumerate() {
                let (e, k) = (&est[idx], targets[idx]);
                table.push(vec![
                    w as f64,
                    i as f64,
                    j as f64,
                    e.value,
                    e.std_error,
                    k,
                    (e.value - k).abs(),
                    est[p + idx].value.sqrt(),
                ]);
            }
            out.note("kernel", limit.name());
        }
    }
    out.files.push(write_table(&ctx.out, "covariance.csv", &table)?);
    out.note("pairs", pairs.len());
    Ok(out)
}

/// Histogram of single-input network outputs next to the closed-form density.
pub fn marginal(cfg: &MarginalConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    require_samples("marginal.samples", cfg.samples)?;
    require_positive("marginal.bins", cfg.bins)?;
    if cfg.x.is_empty() {
        return Err(CliError::Config("marginal.x must not be empty".into()));
    }
    let mut out = Outcome::default();
    let (values, sd, pdf): (Vec<f64>, f64, Box<dyn Fn(f64) -> trigkernel::Result<f64>>) = match cfg.kind {
        MarginalKind::Laplace => {
            let norm = dot(&cfg.x, &cfg.x).sqrt();
            let (s1, s2) = (cfg.sigma1, cfg.sigma2);
            laplace_marginal_pdf(0.0, s1, s2, norm)?;
            let v = replicate(cfg.samples, ctx.seed, |rng| Ok(sample_linear_net_output(s1, s2, &cfg.x, rng)))?;
            let ks = ks_statistic(&v, |f| laplace_marginal_cdf(f, s1, s2, norm).unwrap_or(f64::NAN));
            out.note("ks_statistic", ks);
            (v, std::f64::consts::SQRT_2 * s1 * s2 * norm, Box::new(move |f| laplace_marginal_pdf(f, s1, s2, norm)))
        }
        MarginalKind::Shallow => {
            let width =
                cfg.width.ok_or_else(|| CliError::Config("marginal.width is required for shallow nets".into()))?;
            let se = cfg
                .kernel
                .as_ref()
                .ok_or_else(|| CliError::Config("marginal.kernel is required for shallow nets".into()))?
                .build()?;
            let sampler = ShallowSampler::se(&se, width)?;
            let v: Vec<f64> =
                sample_outputs(&sampler, &[cfg.x.clone()], cfg.samples, ctx.seed)?.into_iter().map(|r| r[0]).collect();
            let amp = se.amplitude_sq();
            (v, amp.sqrt(), Box::new(move |f| shallow_marginal_pdf(f, amp)))
        }
    };
    let range = cfg.range.unwrap_or(5.0 * sd);
    if !(range > 0.0 && range.is_finite()) {
        return Err(CliError::Config("marginal.range must be positive".into()));
    }
    let bw = 2.0 * range / cfg.bins as f64;
    let mut counts = vec![0usize; cfg.bins];
    for v in &values {
        let b = ((v + range) / bw).floor();
        if b >= 0.0 && (b as usize) < cfg.bins {
            counts[b as usize] += 1;
        }
    }
    let s = values.len() as f64;
    let mut table =
        Table::new(header(&["bin_lo", "bin_hi", "center", "count", "empirical_density", "closed_form_density"]));
    for (b, &c) in counts.iter().enumerate() {
        let lo = -range + b as f64 * bw;
        let center = lo + 0.5 * bw;
        table.push(vec![lo, lo + bw, center, c as f64, c as f64 / (s * bw), pdf(center)?]);
    }
    let mean = values.iter().sum::<f64>() / s;
    out.note("sample_variance", values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1.0));
    out.note("skewness", skewness(&values));
    out.note("outside_range", values.len() - counts.iter().sum::<usize>());
    out.files.push(write_table(&ctx.out, "marginal.csv", &table)?);
    Ok(out)
}

/// Phase-shift characteristic function: quadrature, both Gauss-Hermite
/// variants, Monte Carlo and the Gaussian lower bound.
pub fn charfn(cfg: &CharfnConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    require_samples("charfn.samples", cfg.samples)?;
    let psi = match (cfg.psi, &cfg.psi_slope) {
        (Some(c), None) => PhaseShiftSpec::Constant(c),
        (None, Some(a)) => PhaseShiftSpec::Linear(a.clone()),
        _ => return Err(CliError::Config("set exactly one of charfn.psi and charfn.psi_slope".into())),
    };
    if cfg.x.is_empty() || cfg.x.len() > 2 {
        return Err(CliError::Config("charfn.x must have 1 or 2 coordinates".into()));
    }
    if cfg.q.is_empty() {
        return Err(CliError::Config("charfn.q must not be empty".into()));
    }
    let (printed, exact) = (GaussHermiteConstants::printed(), GaussHermiteConstants::exact());
    let mut table = Table::new(header(&[
        "q",
        "numeric",
        "gauss_hermite",
        "gauss_hermite_exact",
        "mc",
        "mc_std_error",
        "lower_bound",
    ]));
    for (k, &q) in cfg.q.iter().enumerate() {
        let numeric = phase_shift_charfn_numeric(q, &cfg.x, &psi, cfg.weight_var, cfg.feature_var)?;
        let gh = phase_shift_charfn_gh(q, &cfg.x, &psi, cfg.weight_var, cfg.feature_var, &printed)?;
        let ghe = phase_shift_charfn_gh(q, &cfg.x, &psi, cfg.weight_var, cfg.feature_var, &exact)?;
        let mc = phase_shift_charfn_mc(
            q,
            &cfg.x,
            &psi,
            cfg.weight_var,
            cfg.feature_var,
            cfg.samples,
            derive_seed(ctx.seed, k as u64),
        )?;
        // Gaussian characteristic function with the same variance
        let bound = (-0.5 * q * q * cfg.weight_var).exp();
        table.push(vec![q, numeric, gh, ghe, mc.value, mc.std_error, bound]);
    }
    let mut out = Outcome::default();
    out.files.push(write_table(&ctx.out, "charfn.csv", &table)?);
    Ok(out)
}

/// Empirical tangent kernel against its closed form.
pub fn ntk(cfg: &NtkConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    require_samples("ntk.samples", cfg.samples)?;
    require_widths("ntk.widths", &cfg.widths)?;
    require_positive("ntk.bottleneck", cfg.bottleneck)?;
    let pairs = resolve_pairs(&cfg.points, cfg.pairs.as_deref())?;
    let pts = &cfg.points;
    let dim = pts[0].len();
    let mut table = Table::new(header(&["width", "i", "j", "empirical", "std_error", "closed_form", "abs_error"]));
    for &w in &cfg.widths {
        let seed = derive_seed(ctx.seed, w as u64);
        let (est, closed): (Vec<_>, Vec<f64>) = match cfg.network {
            NetworkKind::Deep => {
                let sampler = DeepSampler::new(DGPHyper::unit(dim, cfg.bottleneck)?, w, w)?;
                let closed = pairs
                    .iter()
                    .map(|&(i, j)| ntk_dgp_kernel(&pts[i], &pts[j], cfg.bottleneck))
                    .collect::<Result<_, _>>()?;
                (empirical_ntk_pairs(&sampler, pts, &pairs, cfg.samples, seed)?, closed)
            }
            NetworkKind::Shallow => {
                let se = se_or_unit(cfg.kernel.as_ref(), dim)?;
                let sampler = ShallowSampler::se(&se, w)?;
                // the Jacobian is Phi(x), so the weight variance drops out
                let closed = pairs
                    .iter()
                    .map(|&(i, j)| Ok(se.eval(&pts[i], &pts[j])? / se.amplitude_sq()))
                    .collect::<Result<_, CliError>>()?;
                (empirical_ntk_pairs(&sampler, pts, &pairs, cfg.samples, seed)?, closed)
            }
            NetworkKind::Mixture => return Err(CliError::Config("ntk.network must be deep or shallow".into())),
        };
        for ((&(i, j), e), k) in pairs.iter().zip(&est).zip(&closed) {
            table.push(vec![w as f64, i as f64, j as f64, e.value, e.std_error, *k, (e.value - k).abs()]);
        }
    }
    let mut out = Outcome::default();
    out.files.push(write_table(&ctx.out, "ntk.csv", &table)?);
    Ok(out)
}

fn training_data(cfg: &TrainConfig) -> Result<(Vec<Vec<f64>>, Vec<f64>), CliError> {
    match &cfg.data {
        Some(path) => {
            let features = cfg
                .features
                .as_ref()
                .ok_or_else(|| CliError::Config("train.features is required with train.data".into()))?;
            let target = cfg
                .target
                .as_ref()
                .ok_or_else(|| CliError::Config("train.target is required with train.data".into()))?;
            let cols: Vec<&str> = features.iter().map(String::as_str).collect();
            Ok(load_csv(path, &cols, target)?)
        }
        None => {
            if cfg.n < 2 || !(cfg.x_max > cfg.x_min) {
                return Err(CliError::Config("synthetic training data needs n >= 2 and x_max > x_min".into()));
            }
            let step = (cfg.x_max - cfg.x_min) / (cfg.n - 1) as f64;
            let xs: Vec<Vec<f64>> = (0..cfg.n).map(|i| vec![cfg.x_min + step * i as f64]).collect();
            let ys = xs.iter().map(|x| (cfg.frequency * x[0]).sin()).collect();
            Ok((xs, ys))
        }
    }
}

/// Gradient-descent training of a deep net, compared with NTK regression.
pub fn train(cfg: &TrainConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    require_positive("train.width", cfg.width)?;
    require_positive("train.bottleneck", cfg.bottleneck)?;
    require_positive("train.log_every", cfg.log_every)?;
    let (inputs, targets) = training_data(cfg)?;
    let dim = inputs[0].len();
    let queries = match &cfg.queries {
        Some(q) => q.clone(),
        None if dim == 1 => {
            let mut xs: Vec<f64> = inputs.iter().map(|x| x[0]).collect();
            xs.sort_by(f64::total_cmp);
            xs.windows(2).map(|w| vec![0.5 * (w[0] + w[1])]).collect()
        }
        None => inputs.clone(),
    };
    if queries.is_empty() {
        return Err(CliError::Config("train needs at least one query point".into()));
    }
    let mut net =
        DeepTrigNet::sample(&DGPHyper::unit(dim, cfg.bottleneck)?, cfg.width, cfg.width, &mut seeded_rng(ctx.seed))?;
    let initial = net.clone();
    let opts = TrainOptions { lr: cfg.lr, steps: cfg.steps, loss_tol: cfg.loss_tol };
    let trace = gradient_descent_train(&mut net, &inputs, &targets, &opts)?;
    if trace.diverged {
        return Err(CliError::Numerical(format!(
            "training diverged after {} steps at learning rate {:e}",
            trace.steps, trace.lr
        )));
    }
    let mut loss = Table::new(header(&["step", "loss"]));
    let last = trace.losses.len() - 1;
    for (s, l) in trace.losses.iter().enumerate() {
        if s % cfg.log_every == 0 || s == last {
            loss.push(vec![s as f64, *l]);
        }
    }
    let trained = net.forward_batch(&queries)?;
    let reference = ntk_regression_mean(&queries, &inputs, &targets, cfg.bottleneck)?;
    let mut cols: Vec<String> = (0..dim).map(|d| format!("x_{d}")).collect();
    cols.extend(header(&["trained", "ntk_mean", "abs_diff"]));
    let mut preds = Table::new(cols);
    let mut max_diff = 0.0f64;
    for ((q, a), b) in queries.iter().zip(&trained).zip(&reference) {
        let mut row = q.clone();
        row.extend([*a, *b, (a - b).abs()]);
        max_diff = max_diff.max((a - b).abs());
        preds.push(row);
    }
    let mut out = Outcome::default();
    out.files.push(write_table(&ctx.out, "train_loss.csv", &loss)?);
    out.files.push(write_table(&ctx.out, "train_predictions.csv", &preds)?);
    out.note("learning_rate", trace.lr);
    out.note("steps", trace.steps);
    out.note("converged", trace.converged);
    out.note("final_loss", trace.final_loss());
    out.note("max_abs_diff", max_diff);
    out.note("ntk_drift", ntk_drift(&initial, &net, &inputs)?);
    Ok(out)
}

fn hyperparameter_names(kernel: &KernelSpec) -> Vec<String> {
    let se = |prefix: &str, h: &SEHyper| {
        std::iter::once(format!("{prefix}amplitude_sq"))
            .chain((0..h.dim()).map(move |d| format!("{prefix}lengthscale_{d}")))
            .collect::<Vec<_>>()
    };
    match kernel {
        KernelSpec::SquaredExponential(h) => se("", h),
        KernelSpec::SpectralMixture { components, .. } => std::iter::once("amplitude_sq".to_owned())
            .chain(
                components
                    .iter()
                    .enumerate()
                    .flat_map(|(c, comp)| (0..comp.dim()).map(move |d| format!("scale_{c}_{d}"))),
            )
            .collect(),
        KernelSpec::DeepSE(h) => [se("inner_", h.inner()), se("outer_", h.outer())].concat(),
        _ => (0..kernel_hyperparameters(kernel).len()).map(|i| format!("param_{i}")).collect(),
    }
}

fn fit_kernel(cfg: &FitConfig, dim: usize) -> Result<KernelSpec, CliError> {
    Ok(match cfg.kernel {
        FitKernel::Se => KernelSpec::SquaredExponential(se_or_unit(cfg.se.as_ref(), dim)?),
        FitKernel::Sm => {
            let comps = cfg
                .components
                .as_deref()
                .ok_or_else(|| CliError::Config("fit.components is required for sm".into()))?;
            KernelSpec::spectral_mixture(cfg.amplitude_sq, build_components(comps)?)?
        }
        FitKernel::Dgp => {
            let inner = se_or_unit(cfg.se.as_ref(), dim)?;
            let outer = se_or_unit(cfg.outer.as_ref(), cfg.bottleneck)?;
            KernelSpec::DeepSE(DGPHyper::new(inner, outer.clone(), outer.dim())?)
        }
    })
}

fn load_test(path: &Path, features: &[&str], target: &str) -> Result<(Vec<Vec<f64>>, Option<Vec<f64>>), CliError> {
    if read_header(path)?.iter().any(|h| h == target) {
        let (x, y) = load_csv(path, features, target)?;
        Ok((x, Some(y)))
    } else {
        Ok((load_columns(path, features)?.rows, None))
    }
}

/// GP regression on a CSV dataset with optional hyperparameter optimization.
pub fn fit(cfg: &FitConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    if cfg.features.is_empty() {
        return Err(CliError::Config("fit.features must not be empty".into()));
    }
    let cols: Vec<&str> = cfg.features.iter().map(String::as_str).collect();
    let (x, y) = load_csv(&cfg.data, &cols, &cfg.target)?;
    let kernel = fit_kernel(cfg, cols.len())?;
    let problem = RegressionProblem::new(x.clone(), y.clone(), kernel, cfg.noise_var)?;
    let initial = log_marginal_likelihood(&problem)?;
    let mut out = Outcome::default();
    let chosen = if cfg.optimize {
        require_positive("fit.restarts", cfg.restarts)?;
        let opts = OptimizeOptions {
            max_iters: cfg.max_iters,
            restarts: cfg.restarts,
            optimize_noise: cfg.optimize_noise,
            seed: ctx.seed,
            ..OptimizeOptions::default()
        };
        let res = optimize_hyperparams(&problem, &opts)?;
        out.note("budget_exhausted", res.budget_exhausted);
        res.problem
    } else {
        problem
    };
    let lml = log_marginal_likelihood(&chosen)?;

    let mut hp_cols = header(&["log_marginal_likelihood", "initial_log_marginal_likelihood", "noise_var"]);
    hp_cols.extend(hyperparameter_names(&chosen.kernel));
    let mut hp = Table::new(hp_cols);
    let mut row = vec![lml, initial, chosen.noise_var];
    row.extend(kernel_hyperparameters(&chosen.kernel));
    hp.push(row);

    let (tx, ty) = match &cfg.test {
        Some(p) => load_test(p, &cols, &cfg.target)?,
        None => (x, Some(y)),
    };
    let (mean, var) = predict(&chosen, &tx)?;
    let mut pcols = cfg.features.clone();
    pcols.extend(header(&["mean", "latent_variance", "predictive_variance"]));
    if ty.is_some() {
        pcols.extend(header(&[&cfg.target, "abs_error"]));
    }
    let mut preds = Table::new(pcols);
    for (k, xi) in tx.iter().enumerate() {
        let mut row = xi.clone();
        row.extend([mean[k], var[k], var[k] + chosen.noise_var]);
        if let Some(t) = &ty {
            row.extend([t[k], (mean[k] - t[k]).abs()]);
        }
        preds.push(row);
    }
    out.files.push(write_table(&ctx.out, "fit_hyperparameters.csv", &hp)?);
    out.files.push(write_table(&ctx.out, "fit_predictions.csv", &preds)?);
    out.note("kernel", chosen.kernel.name());
    out.note("log_marginal_likelihood", lml);
    Ok(out)
}
