//! Experiment configuration.
//!
//! A config is a TOML file: top-level `seed` and `out`, plus one table per
//! experiment (`[covariance]`, `[fit]`, ...). Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use trigkernel::kernel::{SEHyper, SMComponent};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    /// Output directory, relative to the working directory.
    pub out: Option<PathBuf>,
    pub covariance: Option<CovarianceConfig>,
    pub marginal: Option<MarginalConfig>,
    pub charfn: Option<CharfnConfig>,
    pub ntk: Option<NtkConfig>,
    pub train: Option<TrainConfig>,
    pub fit: Option<FitConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeConfig {
    #[serde(default = "one")]
    pub amplitude_sq: f64,
    pub lengthscales: Vec<f64>,
}

impl SeConfig {
    pub fn build(&self) -> Result<SEHyper, CliError> {
        Ok(SEHyper::new(self.amplitude_sq, self.lengthscales.clone())?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Diagonal spectral covariance.
    pub scale: Vec<f64>,
}

pub fn build_components(c: &[ComponentConfig]) -> Result<Vec<SMComponent>, CliError> {
    c.iter().map(|c| Ok(SMComponent::new(c.weight, c.mean.clone(), c.scale.clone())?)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkKind {
    /// Gaussian features (SE limit).
    Shallow,
    /// Mixture features (spectral-mixture limit).
    Mixture,
    /// Two trig layers (deep SE limit).
    Deep,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceConfig {
    pub network: NetworkKind,
    pub widths: Vec<usize>,
    pub samples: usize,
    pub points: Vec<Vec<f64>>,
    /// Index pairs into `points`; all `i < j` when absent.
    pub pairs: Option<Vec<[usize; 2]>>,
    /// Shallow features, or the inner layer of a deep net.
    pub kernel: Option<SeConfig>,
    /// Outer layer of a deep net; one lengthscale per bottleneck unit.
    pub outer: Option<SeConfig>,
    #[serde(default = "one")]
    pub amplitude_sq: f64,
    pub components: Option<Vec<ComponentConfig>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginalKind {
    /// Two-unit linear net.
    Laplace,
    /// Shallow trig net.
    Shallow,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalConfig {
    pub kind: MarginalKind,
    pub x: Vec<f64>,
    pub samples: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Histogram covers `[-range, range]`; defaults to 5 marginal standard deviations.
    pub range: Option<f64>,
    #[serde(default = "one")]
    pub sigma1: f64,
    #[serde(default = "one")]
    pub sigma2: f64,
    pub width: Option<usize>,
    pub kernel: Option<SeConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharfnConfig {
    pub q: Vec<f64>,
    pub x: Vec<f64>,
    /// Constant phase shift.
    pub psi: Option<f64>,
    /// Phase shift `a . x`.
    pub psi_slope: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub weight_var: f64,
    #[serde(default = "one")]
    pub feature_var: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NtkConfig {
    pub network: NetworkKind,
    pub widths: Vec<usize>,
    pub samples: usize,
    pub points: Vec<Vec<f64>>,
    pub pairs: Option<Vec<[usize; 2]>>,
    #[serde(default = "one_usize")]
    pub bottleneck: usize,
    /// Shallow feature kernel; unit SE when absent.
    pub kernel: Option<SeConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub width: usize,
    #[serde(default = "one_usize")]
    pub bottleneck: usize,
    /// CSV with training data; otherwise `n` points of `sin(frequency x)` on `[x_min, x_max]`.
    pub data: Option<PathBuf>,
    pub features: Option<Vec<String>>,
    pub target: Option<String>,
    #[serde(default = "default_train_n")]
    pub n: usize,
    #[serde(default = "default_x_min")]
    pub x_min: f64,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    #[serde(default = "one")]
    pub frequency: f64,
    /// Prediction inputs; midpoints of consecutive training inputs when absent (1-D).
    pub queries: Option<Vec<Vec<f64>>>,
    pub lr: Option<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    pub loss_tol: Option<f64>,
    /// Write every `log_every`-th loss.
    #[serde(default = "one_usize")]
    pub log_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitKernel {
    Se,
    Sm,
    Dgp,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub data: PathBuf,
    pub features: Vec<String>,
    pub target: String,
    /// Prediction inputs; the training inputs when absent.
    pub test: Option<PathBuf>,
    pub kernel: FitKernel,
    /// SE kernel or inner layer; unit values when absent.
    pub se: Option<SeConfig>,
    pub outer: Option<SeConfig>,
    #[serde(default = "one_usize")]
    pub bottleneck: usize,
    #[serde(default = "one")]
    pub amplitude_sq: f64,
    pub components: Option<Vec<ComponentConfig>>,
    #[serde(default = "default_noise")]
    pub noise_var: f64,
    #[serde(default = "yes")]
    pub optimize: bool,
    #[serde(default = "yes")]
    pub optimize_noise: bool,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: u64,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_bins() -> usize {
    60
}
fn default_train_n() -> usize {
    8
}
fn default_x_min() -> f64 {
    -1.5
}
fn default_x_max() -> f64 {
    1.5
}
fn default_steps() -> usize {
    5000
}
fn default_noise() -> f64 {
    0.1
}
fn default_restarts() -> usize {
    5
}
fn default_max_iters() -> u64 {
    400
}

/// Parsed config together with its flattened `dotted.key = value` echo.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub echo: BTreeMap<String, String>,
    pub path: PathBuf,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, path)
}

pub fn parse_config(text: &str, path: &Path) -> Result<LoadedConfig, CliError> {
    let table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut echo = BTreeMap::new();
    flatten("", &table, &mut echo);
    let config: ExperimentConfig =
        toml::Value::Table(table).try_into().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(LoadedConfig { config, echo, path: path.to_path_buf() })
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, String>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            toml::Value::String(s) => {
                out.insert(key, s.clone());
            }
            other => {
                out.insert(key, other.to_string());
            }
        }
    }
}

/// Positive count check for config fields.
pub fn require_positive(name: &str, v: usize) -> Result<(), CliError> {
    if v == 0 {
        return Err(CliError::Config(format!("{name} must be positive")));
    }
    Ok(())
}

pub fn require_samples(name: &str, v: usize) -> Result<(), CliError> {
    if v < 2 {
        return Err(CliError::Config(format!("{name} must be at least 2")));
    }
    Ok(())
}

/// Validated pairs into `points`, or every `i < j`.
pub fn resolve_pairs(points: &[Vec<f64>], pairs: Option<&[[usize; 2]]>) -> Result<Vec<(usize, usize)>, CliError> {
    if points.is_empty() {
        return Err(CliError::Config("points must not be empty".into()));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(CliError::Config("points must share one positive dimension".into()));
    }
    let out: Vec<(usize, usize)> = match pairs {
        Some(p) => p.iter().map(|&[i, j]| (i, j)).collect(),
        None => (0..points.len()).flat_map(|i| (i + 1..points.len()).map(move |j| (i, j))).collect(),
    };
    if out.is_empty() {
        return Err(CliError::Config("no input pairs: give two or more points or explicit pairs".into()));
    }
    if let Some(&(i, j)) = out.iter().find(|&&(i, j)| i >= points.len() || j >= points.len()) {
        return Err(CliError::Config(format!("pair [{i}, {j}] is out of range for {} points", points.len())));
    }
    Ok(out)
}
