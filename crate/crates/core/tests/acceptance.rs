//! Acceptance suite: prints one PASS/FAIL line per criterion, followed by the
//! individual checks behind it.
//!
//! `ACCEPTANCE_ONLY=3,11` restricts the run to the listed criteria. The
//! process fails if any check fails that is not marked as a documented gap.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use trigkernel::bayes::{predict_kernel_space, predict_weight_space, weight_posterior_with, SolveStrategy};
use trigkernel::distribution::{
    dgp_charfn_lower_bound, empirical_charfn_of, ks_statistic, laplace_marginal_cdf, phase_shift_charfn_gh,
    phase_shift_charfn_mc, phase_shift_charfn_numeric, sample_linear_net_output, sample_outputs, skewness,
    zero_concentration_check, GaussHermiteConstants,
};
use trigkernel::gp::{log_marginal_likelihood, predict, RegressionProblem};
use trigkernel::kernel::{
    dgp_se_kernel, kernel_matrix, ntk_dgp_kernel, se_kernel, sm_kernel, DGPHyper, Kernel, KernelSpec, SEHyper,
    SMComponent, SmSupportKernel, SupportKernel, SupportSet,
};
use trigkernel::linalg::{max_eigenvalue, min_eigenvalue, JitteredCholesky};
use trigkernel::montecarlo::{
    empirical_covariance_pairs, empirical_ntk_gram, empirical_ntk_pairs, gradient_descent_train, ntk_drift,
    ntk_regression_mean, replicate, two_stage_sm_covariance, MCEstimate, TrainOptions,
};
use trigkernel::network::{
    g_matrix_spectrum, sample_features, trig_feature_map, DeepSampler, DeepTrigNet, Differentiable, FeatureSampler,
    PhaseShiftSampler, PhaseShiftSpec, ShallowSampler, ShallowTrigNet, SupportDeepSampler, TrigNetwork,
};
use trigkernel::rng::seeded_rng;
use trigkernel::Result;

/// Standard errors allowed between a Monte Carlo estimate and its target.
const K_SE: f64 = 4.0;
/// Finite-width slack is `WIDTH_C / sqrt(width)`.
const WIDTH_C: f64 = 0.3;
const KS_MAX: f64 = 0.002;
const GH_ABS_TOL: f64 = 0.02;
const TRAIN_LOSS_TOL: f64 = 1e-6;
const TRAIN_LR_SCALE: f64 = 1.0;
const TRAIN_PRED_TOL: f64 = 0.05;
const DUAL_TOL: f64 = 1e-8;
const JACOBIAN_REL_TOL: f64 = 1e-6;
/// Entries smaller than this are compared absolutely.
const JACOBIAN_FLOOR: f64 = 1e-3;
const FD_STEP: f64 = 1e-5;
const LML_TOL: f64 = 1e-8;
const INTERP_TOL: f64 = 1e-6;

fn allowance(width: usize) -> f64 {
    WIDTH_C / (width as f64).sqrt()
}

#[derive(PartialEq)]
enum Status {
    Pass,
    Fail,
    Info,
}

struct Check {
    label: String,
    status: Status,
    detail: String,
    /// Reason a failure is expected; such failures do not fail the process.
    known_gap: Option<&'static str>,
}

impl Check {
    fn new(label: impl Into<String>, pass: bool, detail: String) -> Self {
        Self { label: label.into(), status: if pass { Status::Pass } else { Status::Fail }, detail, known_gap: None }
    }

    fn info(label: impl Into<String>, detail: String) -> Self {
        Self { label: label.into(), status: Status::Info, detail, known_gap: None }
    }

    fn gap(mut self, reason: &'static str) -> Self {
        self.known_gap = Some(reason);
        self
    }
}

fn mc_check(label: impl Into<String>, est: &MCEstimate, target: f64, slack: f64) -> Check {
    let tol = K_SE * est.std_error + slack;
    let diff = (est.value - target).abs();
    Check::new(
        label,
        diff <= tol,
        format!("mc {:.5} (se {:.1e}) target {:.5} |d| {:.1e} tol {:.1e}", est.value, est.std_error, target, diff, tol),
    )
}

type Run = fn() -> Result<Vec<Check>>;

struct Criterion {
    id: usize,
    title: &'static str,
    run: Run,
}

fn criteria() -> Vec<Criterion> {
    vec![
        Criterion { id: 1, title: "shallow SE convergence", run: c01_shallow_se },
        Criterion { id: 2, title: "spectral mixture convergence", run: c02_spectral_mixture },
        Criterion { id: 3, title: "deep kernel convergence", run: c03_deep },
        Criterion { id: 4, title: "support kernel", run: c04_support },
        Criterion { id: 5, title: "mixed-spectrum deep kernel", run: c05_mixed_spectrum },
        Criterion { id: 6, title: "G-matrix spectrum", run: c06_g_spectrum },
        Criterion { id: 7, title: "Laplace marginal", run: c07_laplace },
        Criterion { id: 8, title: "Gaussian marginal", run: c08_gaussian_marginal },
        Criterion { id: 9, title: "phase-shift characteristic function", run: c09_phase_shift },
        Criterion { id: 10, title: "heavy-tail bound", run: c10_heavy_tail },
        Criterion { id: 11, title: "tangent kernels", run: c11_ntk },
        Criterion { id: 12, title: "training correspondence", run: c12_training },
        Criterion { id: 13, title: "weight/kernel space identity", run: c13_dual },
        Criterion { id: 14, title: "Jacobian check", run: c14_jacobian },
        Criterion { id: 15, title: "GP plumbing", run: c15_gp },
    ]
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let (mut passed, mut failed, mut gaps) = (0, 0, 0);
    let mut unexpected = false;
    for c in criteria() {
        if only.as_ref().is_some_and(|o| !o.contains(&c.id)) {
            continue;
        }
        let start = Instant::now();
        let checks = (c.run)();
        let secs = start.elapsed().as_secs_f64();
        let checks = match checks {
            Ok(v) => v,
            Err(e) => vec![Check::new("run", false, format!("error: {e}"))],
        };
        let fails: Vec<&Check> = checks.iter().filter(|k| k.status == Status::Fail).collect();
        let ok = fails.is_empty();
        println!("[{}] C{:02} {} ({secs:.1} s)", if ok { "PASS" } else { "FAIL" }, c.id, c.title);
        for k in &checks {
            let tag = match k.status {
                Status::Pass => "ok  ",
                Status::Fail => "FAIL",
                Status::Info => "info",
            };
            println!("       {tag} {}: {}", k.label, k.detail);
            if let (Status::Fail, Some(reason)) = (&k.status, k.known_gap) {
                println!("            documented gap: {reason}");
            }
        }
        if ok {
            passed += 1;
        } else {
            failed += 1;
            if fails.iter().all(|k| k.known_gap.is_some()) {
                gaps += 1;
            } else {
                unexpected = true;
            }
        }
    }
    println!("acceptance: {passed} passed, {failed} failed ({gaps} with documented gaps only)");
    if unexpected {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn points_2d() -> Vec<Vec<f64>> {
    vec![vec![0.0, 0.0], vec![0.4, -0.3], vec![-0.6, 0.5], vec![1.1, 0.7]]
}

fn points_1d() -> Vec<Vec<f64>> {
    vec![vec![-0.5], vec![0.3], vec![0.9], vec![2.0]]
}

const PAIRS: [(usize, usize); 5] = [(0, 1), (0, 2), (0, 3), (1, 2), (2, 3)];

fn pair_checks<F>(pts: &[Vec<f64>], est: &[MCEstimate], slack: f64, target: F) -> Result<Vec<Check>>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    PAIRS
        .iter()
        .zip(est)
        .map(|(&(i, j), e)| Ok(mc_check(format!("pair ({i},{j})"), e, target(&pts[i], &pts[j])?, slack)))
        .collect()
}

fn c01_shallow_se() -> Result<Vec<Check>> {
    let se = SEHyper::new(1.3, vec![0.8, 1.5])?;
    let n = 10_000;
    let sampler = ShallowSampler::se(&se, n)?;
    let pts = points_2d();
    let est = empirical_covariance_pairs(&sampler, &pts, &PAIRS, 100_000, 101)?;
    pair_checks(&pts, &est, allowance(n), |x, y| se_kernel(x, y, &se))
}

fn c02_spectral_mixture() -> Result<Vec<Check>> {
    let comps = vec![
        SMComponent::new(0.6, vec![0.5, 0.0], vec![0.3, 0.8])?,
        SMComponent::new(0.4, vec![-1.0, 1.5], vec![0.5, 0.2])?,
    ];
    let amp = 1.2;
    let n = 10_000;
    let sampler = ShallowSampler::new(FeatureSampler::mixture(comps.clone())?, n, amp)?;
    let pts = points_2d();
    let est = empirical_covariance_pairs(&sampler, &pts, &PAIRS, 100_000, 102)?;
    pair_checks(&pts, &est, allowance(n), |x, y| sm_kernel(x, y, &comps, amp))
}

fn c03_deep() -> Result<Vec<Check>> {
    let n = 20_000;
    let pts = points_2d();
    let mut out = Vec::new();
    for h in 1..=3 {
        let hyper = DGPHyper::new(SEHyper::new(1.0, vec![0.9, 1.4])?, SEHyper::new(1.5, vec![1.2; h])?, h)?;
        let sampler = DeepSampler::new(hyper.clone(), n, n)?;
        let est = empirical_covariance_pairs(&sampler, &pts, &PAIRS, 20_000, 103 + h as u64)?;
        for mut c in pair_checks(&pts, &est, allowance(n), |x, y| dgp_se_kernel(x, y, &hyper))? {
            c.label = format!("H={h} {}", c.label);
            out.push(c);
        }
    }
    Ok(out)
}

fn support_set() -> Result<SupportSet> {
    let z = vec![vec![-1.0], vec![0.0], vec![1.2]];
    let u = DMatrix::from_row_slice(2, 3, &[0.5, -0.3, 0.8, -0.4, 0.6, 0.1]);
    SupportSet::new(1, z, u, 0.05)
}

fn c04_support() -> Result<Vec<Check>> {
    let n = 20_000;
    let (inner, outer) = (SEHyper::new(1.0, vec![0.8])?, SEHyper::new(1.3, vec![1.0, 0.7])?);
    let sampler = SupportDeepSampler::new(support_set()?, inner, outer, n, n)?;
    let kernel = sampler.limit_kernel().clone();
    let pts = points_1d();
    let est = empirical_covariance_pairs(&sampler, &pts, &PAIRS, 20_000, 104)?;
    pair_checks(&pts, &est, allowance(n), |x, y| kernel.eval(x, y))
}

fn c05_mixed_spectrum() -> Result<Vec<Check>> {
    let z = vec![vec![-1.0], vec![0.0], vec![1.2]];
    let support = SupportSet::new(1, z, DMatrix::from_row_slice(1, 3, &[0.5, -0.3, 0.8]), 0.05)?;
    let comps = vec![SMComponent::new(0.7, vec![0.0], vec![1.0])?, SMComponent::new(0.3, vec![1.5], vec![0.5])?];
    let kernel = SmSupportKernel::new(support, SEHyper::unit(1), comps)?;
    let width = 100_000;
    [([-0.5], [0.3]), ([0.3], [2.0])]
        .iter()
        .enumerate()
        .map(|(i, (x, y))| {
            let est = two_stage_sm_covariance(&kernel, x, y, width, 10_000, 105 + i as u64)?;
            Ok(mc_check(format!("({}, {})", x[0], y[0]), &est, kernel.eval(x, y)?, 0.0))
        })
        .collect()
}

fn c06_g_spectrum() -> Result<Vec<Check>> {
    let mut rng = seeded_rng(106);
    let mut worst_rank = 0;
    let mut worst_eig_err = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(1..=3);
        let n1 = rng.random_range(1..=40);
        let omega = FeatureSampler::gaussian(vec![rng.random_range(0.2..3.0); d])?.sample_with(n1, &mut rng);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v = DVector::from_vec(trig_feature_map(&omega, &x)?) - DVector::from_vec(trig_feature_map(&omega, &y)?);
        let eig = (&v * v.transpose()).symmetric_eigen().eigenvalues;
        let top = eig.iter().fold(0.0f64, |m, e| m.max(*e));
        let rank = eig.iter().filter(|e| e.abs() > 1e-12 * top.max(1.0)).count();
        let spec = g_matrix_spectrum(&omega, &x, &y)?;
        worst_rank = worst_rank.max(rank.max(spec.rank));
        worst_eig_err = worst_eig_err.max((spec.eigenvalue - top).abs());
    }
    let mut out = vec![Check::new(
        "rank on 100 instances",
        worst_rank <= 1 && worst_eig_err < 1e-10,
        format!("max rank {worst_rank}, library vs dense eigenvalue {worst_eig_err:.1e}"),
    )];

    let n1 = 100_000;
    let se = SEHyper::new(1.0, vec![0.7, 1.3])?;
    let omega = FeatureSampler::for_se(&se).sample_with(n1, &mut seeded_rng(206));
    let (x, y) = ([0.3, -0.4], [-0.5, 0.6]);
    let spec = g_matrix_spectrum(&omega, &x, &y)?;
    // per-feature contributions 2 - 2 cos(omega_i . (x - y)) give the standard error
    let terms: Vec<f64> = (0..n1)
        .map(|i| {
            let w = omega.row(i);
            2.0 - 2.0 * (w[0] * (x[0] - y[0]) + w[1] * (x[1] - y[1])).cos()
        })
        .collect();
    let est = MCEstimate::from_values(&terms, 206)?;
    let target = 2.0 - 2.0 * se_kernel(&x, &y, &se)?;
    let mut c = mc_check("eigenvalue at n1=1e5", &MCEstimate { value: spec.eigenvalue, ..est }, target, 0.0);
    c.detail.push_str(&format!(" (term mean {:.5})", est.value));
    out.push(c);
    Ok(out)
}

fn c07_laplace() -> Result<Vec<Check>> {
    let (s1, s2) = (0.8, 1.3);
    let x = [0.6, -0.5, 0.2];
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let samples = replicate(1_000_000, 107, |rng| Ok(sample_linear_net_output(s1, s2, &x, rng)))?;
    let ks = ks_statistic(&samples, |f| laplace_marginal_cdf(f, s1, s2, norm).expect("valid parameters"));
    Ok(vec![Check::new("KS distance, 1e6 draws", ks <= KS_MAX, format!("{ks:.5} <= {KS_MAX}"))])
}

fn c08_gaussian_marginal() -> Result<Vec<Check>> {
    let se = SEHyper::new(1.5, vec![1.0, 0.6])?;
    let x = vec![0.4, -0.2];
    let samples = 200_000;
    let mut out = Vec::new();
    for (k, n) in [3, 300].into_iter().enumerate() {
        let sampler = ShallowSampler::se(&se, n)?;
        let f: Vec<f64> =
            sample_outputs(&sampler, &[x.clone()], samples, 108 + k as u64)?.into_iter().map(|r| r[0]).collect();
        let s = samples as f64;
        let mean = f.iter().sum::<f64>() / s;
        let m = |p: i32| f.iter().map(|v| (v - mean).powi(p)).sum::<f64>() / s;
        let (m2, m4, m6) = (m(2), m(4), m(6));
        let var = m2 * s / (s - 1.0);
        let se_var = ((m4 - m2 * m2) / s).sqrt();
        out.push(mc_check(
            format!("n={n} variance"),
            &MCEstimate { value: var, std_error: se_var, samples, seed: 108 },
            se.amplitude_sq(),
            0.0,
        ));
        // large-sample variance of the skewness of a symmetric law
        let se_skew = ((m6 - 6.0 * m4 * m2 + 9.0 * m2.powi(3)) / m2.powi(3) / s).sqrt();
        out.push(mc_check(
            format!("n={n} skewness"),
            &MCEstimate { value: skewness(&f), std_error: se_skew, samples, seed: 108 },
            0.0,
            0.0,
        ));
    }
    Ok(out)
}

fn c09_phase_shift() -> Result<Vec<Check>> {
    let psi = PhaseShiftSpec::Constant(PI / 5.0);
    let x = [0.7];
    let printed = GaussHermiteConstants::printed();
    let exact = GaussHermiteConstants::exact();
    let mut out = Vec::new();
    for (k, q) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let quad = phase_shift_charfn_numeric(q, &x, &psi, 1.0, 1.0)?;
        let mc = phase_shift_charfn_mc(q, &x, &psi, 1.0, 1.0, 1_000_000, 109 + k as u64)?;
        out.push(mc_check(format!("q={q} quadrature vs MC"), &mc, quad, 0.0));
        let gh = phase_shift_charfn_gh(q, &x, &psi, 1.0, 1.0, &printed)?;
        let gh_exact = phase_shift_charfn_gh(q, &x, &psi, 1.0, 1.0, &exact)?;
        out.push(
            Check::new(
                format!("q={q} Gauss-Hermite"),
                (gh - quad).abs() <= GH_ABS_TOL,
                format!(
                    "gh {gh:.5} quad {quad:.5} |d| {:.4} tol {GH_ABS_TOL} (exact-node gh {gh_exact:.5})",
                    (gh - quad).abs()
                ),
            )
            .gap("the three-node first-order truncation loses accuracy as q grows"),
        );
    }
    // simulated width-1 networks follow the formula evaluated at twice the phase
    let base = ShallowSampler::new(FeatureSampler::standard(1), 1, 1.0)?;
    let sampler = PhaseShiftSampler { base, psi: psi.clone() };
    let outs = sample_outputs(&sampler, &[x.to_vec()], 1_000_000, 309)?;
    let emp = empirical_charfn_of(&outs, &[1.0], 309)?;
    let at_psi = phase_shift_charfn_numeric(1.0, &x, &psi, 1.0, 1.0)?;
    let at_2psi = phase_shift_charfn_numeric(1.0, &x, &PhaseShiftSpec::Constant(2.0 * PI / 5.0), 1.0, 1.0)?;
    out.push(Check::info(
        "q=1 simulated network",
        format!("mc {:.5} (se {:.1e}); formula at psi {at_psi:.5}, at 2 psi {at_2psi:.5}", emp.value, emp.std_error),
    ));
    Ok(out)
}

fn c10_heavy_tail() -> Result<Vec<Check>> {
    let hyper = DGPHyper::unit(1, 1)?;
    let inputs = vec![vec![-0.4], vec![0.1], vec![0.8]];
    let k = kernel_matrix(&hyper, &inputs, None)?;
    let width = 2_000;
    let sampler = DeepSampler::new(hyper.clone(), width, width)?;
    let outs = sample_outputs(&sampler, &inputs, 100_000, 110)?;
    let mut rng = seeded_rng(210);
    let mut worst = f64::INFINITY;
    let mut worst_detail = String::new();
    for _ in 0..20 {
        let t: Vec<f64> = (0..3)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                1.5 * z
            })
            .collect();
        let emp = empirical_charfn_of(&outs, &t, 110)?;
        let bound = dgp_charfn_lower_bound(&t, &k)?;
        let z = (emp.value - bound) / emp.std_error;
        if z < worst {
            worst = z;
            worst_detail = format!("mc {:.5} (se {:.1e}) bound {bound:.5}", emp.value, emp.std_error);
        }
    }
    let mut out = vec![Check::new(
        "charfn >= Gaussian bound, 20 t vectors",
        worst >= -K_SE,
        format!("min (mc - bound)/se {worst:.2}; at min: {worst_detail}"),
    )];

    let zc_sampler = DeepSampler::new(hyper.clone(), 1_000, 1_000)?;
    let pair = vec![vec![0.0], vec![0.5]];
    let zc = zero_concentration_check(&zc_sampler, &hyper, &pair, 0.05, 400_000, 310)?;
    let e = zc.empirical;
    out.push(Check::new(
        "density at origin, N=2",
        zc.at_least_reference(K_SE),
        format!(
            "ball estimate {:.4} (se {:.1e}, {} hits) gaussian {:.4}; radius 0.025/0.1 give {:.4}/{:.4}",
            e.estimate, e.std_error, e.hits, zc.gaussian_ref, zc.sensitivity[0].estimate, zc.sensitivity[1].estimate
        ),
    ));
    let single = zero_concentration_check(&zc_sampler, &hyper, &pair[..1], 0.05, 200_000, 410)?;
    out.push(Check::info(
        "density at origin, N=1",
        format!(
            "{:.4} (se {:.1e}) vs gaussian {:.4}; the one-point marginal is exactly Gaussian",
            single.empirical.estimate, single.empirical.std_error, single.gaussian_ref
        ),
    ));
    Ok(out)
}

fn c11_ntk() -> Result<Vec<Check>> {
    let n = 10_000;
    let pts = points_2d();
    let mut out = Vec::new();
    for h in 1..=2 {
        let sampler = DeepSampler::new(DGPHyper::unit(2, h)?, n, n)?;
        let est = empirical_ntk_pairs(&sampler, &pts, &PAIRS, 10_000, 111 + h as u64)?;
        for mut c in pair_checks(&pts, &est, allowance(n), |x, y| ntk_dgp_kernel(x, y, h))? {
            c.label = format!("deep H={h} {}", c.label);
            out.push(c);
        }
    }
    let se = SEHyper::unit(2);
    let sampler = ShallowSampler::se(&se, n)?;
    let est = empirical_ntk_pairs(&sampler, &pts, &PAIRS, 2_000, 211)?;
    for mut c in pair_checks(&pts, &est, allowance(n), |x, y| se_kernel(x, y, &se))? {
        c.label = format!("shallow {}", c.label);
        out.push(c);
    }
    Ok(out)
}

fn c12_training() -> Result<Vec<Check>> {
    let width = 4096;
    let inputs: Vec<Vec<f64>> = (0..8).map(|i| vec![-1.5 + 3.0 * i as f64 / 7.0]).collect();
    let targets: Vec<f64> = inputs.iter().map(|x| x[0].sin()).collect();
    let held_out: Vec<Vec<f64>> = inputs.windows(2).map(|w| vec![0.5 * (w[0][0] + w[1][0])]).collect();
    let mut net = DeepTrigNet::sample(&DGPHyper::unit(1, 1)?, width, width, &mut seeded_rng(112))?;
    let initial = net.clone();
    // the Gram on 8 close points is ill-conditioned; 1/lambda_max stays inside
    // the 2/lambda_max stability limit and halves the steps of the default rate
    let lr = TRAIN_LR_SCALE / max_eigenvalue(&empirical_ntk_gram(&net, &inputs)?);
    let opts = TrainOptions { lr: Some(lr), steps: 200_000, loss_tol: Some(TRAIN_LOSS_TOL) };
    let trace = gradient_descent_train(&mut net, &inputs, &targets, &opts)?;
    let mut out = vec![Check::new(
        "loss",
        trace.converged,
        format!(
            "final {:.2e} after {} steps at lr {:.3e}, diverged {}",
            trace.final_loss(),
            trace.steps,
            trace.lr,
            trace.diverged
        ),
    )];
    let preds = net.forward_batch(&held_out)?;
    let reference = ntk_regression_mean(&held_out, &inputs, &targets, 1)?;
    let dev = preds.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.push(Check::new(
        "held-out vs NTK regression",
        dev <= TRAIN_PRED_TOL,
        format!("max |d| {dev:.4} tol {TRAIN_PRED_TOL}"),
    ));
    out.push(Check::info(
        "tangent kernel drift",
        format!("{:.3} relative Frobenius change over training", ntk_drift(&initial, &net, &inputs)?),
    ));
    Ok(out)
}

fn c13_dual() -> Result<Vec<Check>> {
    let mut rng = seeded_rng(113);
    let mut worst = 0.0f64;
    for inst in 0..100 {
        let d = rng.random_range(1..=3);
        let n = rng.random_range(1..=20);
        let m = rng.random_range(1..=12);
        let prior = rng.random_range(0.2..3.0);
        let noise = rng.random_range(0.01..1.0);
        let features = sample_features(&FeatureSampler::standard(d), n, d, 500 + inst)?;
        let inputs: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let targets: Vec<f64> = (0..m).map(|_| rng.random_range(-1.5..1.5)).collect();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let post = weight_posterior_with(&features, &inputs, &targets, prior, noise, SolveStrategy::Primal)?;
        let (wm, wv) = predict_weight_space(&post, &features, &x)?;
        let (km, kv) = predict_kernel_space(&features, &inputs, &targets, &x, prior, noise)?;
        worst = worst.max((wm - km).abs() / km.abs().max(1.0)).max((wv - kv).abs() / kv.abs().max(1.0));
    }
    Ok(vec![Check::new(
        "mean and variance, 100 instances",
        worst <= DUAL_TOL,
        format!("max |d| / max(1, |value|) {worst:.1e} tol {DUAL_TOL:.0e}"),
    )])
}

fn max_jacobian_error<N: Differentiable + Clone>(net: &N, xs: &[Vec<f64>]) -> Result<f64> {
    let p0 = net.params();
    let mut worst = 0.0f64;
    for x in xs {
        let jac = net.jacobian(x)?;
        let mut probe = net.clone();
        for k in 0..p0.len() {
            let mut p = p0.clone();
            p[k] = p0[k] + FD_STEP;
            probe.set_params(&p)?;
            let up = probe.forward(x)?;
            p[k] = p0[k] - FD_STEP;
            probe.set_params(&p)?;
            let down = probe.forward(x)?;
            let fd = (up - down) / (2.0 * FD_STEP);
            worst = worst.max((fd - jac[k]).abs() / jac[k].abs().max(JACOBIAN_FLOOR));
        }
    }
    Ok(worst)
}

fn c14_jacobian() -> Result<Vec<Check>> {
    let mut rng = seeded_rng(114);
    let xs = vec![vec![0.3, -0.7], vec![-1.2, 0.4], vec![0.9, 1.1]];
    let shallow = ShallowTrigNet::sample(&FeatureSampler::standard(2), 25, 1.0, &mut rng)?;
    let deep3 = DeepTrigNet::sample(&DGPHyper::unit(2, 3)?, 10, 10, &mut rng)?;
    let deep1 = DeepTrigNet::sample(&DGPHyper::unit(2, 1)?, 20, 30, &mut rng)?;
    Ok(vec![
        jac_check("shallow", shallow.num_params(), max_jacobian_error(&shallow, &xs)?),
        jac_check("deep H=3", deep3.num_params(), max_jacobian_error(&deep3, &xs)?),
        jac_check("deep H=1", deep1.num_params(), max_jacobian_error(&deep1, &xs)?),
    ])
}

fn jac_check(label: &str, params: usize, err: f64) -> Check {
    Check::new(
        format!("{label}, {params} params"),
        err <= JACOBIAN_REL_TOL && params <= 100,
        format!("max relative error {err:.1e} tol {JACOBIAN_REL_TOL:.0e}"),
    )
}

fn all_kernels() -> Result<Vec<KernelSpec>> {
    let z = vec![vec![-1.0], vec![0.0], vec![1.2]];
    let scalar_support = SupportSet::new(1, z, DMatrix::from_row_slice(1, 3, &[0.5, -0.3, 0.8]), 0.05)?;
    Ok(vec![
        KernelSpec::SquaredExponential(SEHyper::new(1.4, vec![0.7])?),
        KernelSpec::spectral_mixture(
            1.1,
            vec![SMComponent::new(0.6, vec![0.4], vec![0.5])?, SMComponent::new(0.4, vec![1.3], vec![0.2])?],
        )?,
        KernelSpec::DeepSE(DGPHyper::new(SEHyper::unit(1), SEHyper::new(1.2, vec![0.8, 1.5])?, 2)?),
        KernelSpec::Support(SupportKernel::new(support_set()?, SEHyper::unit(1), SEHyper::new(1.0, vec![0.9, 1.1])?)?),
        KernelSpec::MixedSpectrumSupport(SmSupportKernel::new(
            scalar_support,
            SEHyper::unit(1),
            vec![SMComponent::new(1.0, vec![0.5], vec![0.8])?],
        )?),
        KernelSpec::deep_ntk(1, 2)?,
    ])
}

/// `log N(y | 0, K + s_n^2 I)` through an LU factorisation.
fn lml_oracle(k: &DMatrix<f64>, y: &DVector<f64>, noise: f64) -> f64 {
    let n = y.len();
    let c = k + DMatrix::identity(n, n) * noise;
    let lu = c.clone().lu();
    let sol = lu.solve(y).expect("nonsingular");
    -0.5 * y.dot(&sol) - 0.5 * lu.determinant().ln() - 0.5 * n as f64 * (2.0 * PI).ln()
}

fn c15_gp() -> Result<Vec<Check>> {
    let mut rng = seeded_rng(115);
    let kernels = all_kernels()?;
    let mut lml_err = 0.0f64;
    for k in &kernels {
        for n in 1..=5 {
            let inputs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
            let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
            let noise = rng.random_range(0.05..0.5);
            let lib =
                log_marginal_likelihood(&RegressionProblem::new(inputs.clone(), targets.clone(), k.clone(), noise)?)?;
            let oracle = lml_oracle(&kernel_matrix(k, &inputs, None)?, &DVector::from_vec(targets), noise);
            lml_err = lml_err.max((lib - oracle).abs());
        }
    }
    let mut out = vec![Check::new(
        "log marginal likelihood, 6 kernels x N=1..5",
        lml_err <= LML_TOL,
        format!("max |d| {lml_err:.1e} tol {LML_TOL:.0e}"),
    )];

    let mut interp_err = 0.0f64;
    for k in &kernels[..3] {
        let inputs: Vec<Vec<f64>> = (0..8).map(|i| vec![-2.0 + 0.6 * i as f64]).collect();
        let targets: Vec<f64> = inputs.iter().map(|x| (1.3 * x[0]).sin() + 0.2 * x[0]).collect();
        let (mean, _) = predict(&RegressionProblem::new(inputs.clone(), targets.clone(), k.clone(), 0.0)?, &inputs)?;
        interp_err = mean.iter().zip(&targets).map(|(a, b)| (a - b).abs()).fold(interp_err, f64::max);
    }
    out.push(Check::new(
        "noise-free interpolation",
        interp_err <= INTERP_TOL,
        format!("max |d| {interp_err:.1e} tol {INTERP_TOL:.0e}"),
    ));

    let mut worst = f64::INFINITY;
    let mut max_jitter = 0.0f64;
    for k in &kernels {
        let pts: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
        let gram = kernel_matrix(k, &pts, None)?;
        let scale = gram.trace() / 40.0;
        let chol = JitteredCholesky::new(gram.clone())?;
        max_jitter = max_jitter.max(chol.jitter());
        let shifted = gram + DMatrix::identity(40, 40) * chol.jitter();
        worst = worst.min(min_eigenvalue(&shifted) / scale);
    }
    out.push(Check::new(
        "Gram matrices PSD after jitter",
        worst >= -1e-12,
        format!("min eigenvalue / mean diagonal {worst:.1e}, largest jitter {max_jitter:.1e}"),
    ));
    Ok(out)
}
