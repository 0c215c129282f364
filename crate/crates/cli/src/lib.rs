//! Batch experiment runner for the `trigkernel` library.
//!
//! One invocation runs one experiment from a TOML config, writes its result
//! tables as CSV and a key-value manifest, and maps failures to exit codes
//! (2 for bad input, 3 for numerical or output failures).

pub mod config;
pub mod data;
pub mod error;
pub mod experiments;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::ValueEnum;

pub use config::{load_config, ExperimentConfig};
pub use data::load_csv;
pub use error::{CliError, DataError};
use experiments::{Outcome, RunContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Covariance,
    Marginal,
    Charfn,
    Ntk,
    Train,
    Fit,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::Covariance => "covariance",
            Self::Marginal => "marginal",
            Self::Charfn => "charfn",
            Self::Ntk => "ntk",
            Self::Train => "train",
            Self::Fit => "fit",
        }
    }
}

/// Files written by a run; the manifest comes last.
#[derive(Debug)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    s.as_ref().ok_or_else(|| CliError::Config(format!("config has no [{name}] section")))
}

/// Run `experiment` from the config at `config_path`. `seed` and `out`
/// override the config values; the defaults are seed 0 and the working directory.
pub fn run(
    experiment: Experiment,
    config_path: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<RunReport, CliError> {
    let loaded = load_config(config_path)?;
    let cfg = &loaded.config;
    let ctx = RunContext {
        seed: seed.or(cfg.seed).unwrap_or(0),
        out: out.map(Path::to_path_buf).or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from(".")),
    };
    std::fs::create_dir_all(&ctx.out).map_err(|source| CliError::Output { path: ctx.out.clone(), source })?;
    let outcome = match experiment {
        Experiment::Covariance => experiments::covariance(section(&cfg.covariance, "covariance")?, &ctx)?,
        Experiment::Marginal => experiments::marginal(section(&cfg.marginal, "marginal")?, &ctx)?,
        Experiment::Charfn => experiments::charfn(section(&cfg.charfn, "charfn")?, &ctx)?,
        Experiment::Ntk => experiments::ntk(section(&cfg.ntk, "ntk")?, &ctx)?,
        Experiment::Train => experiments::train(section(&cfg.train, "train")?, &ctx)?,
        Experiment::Fit => experiments::fit(section(&cfg.fit, "fit")?, &ctx)?,
    };
    let manifest = write_manifest(experiment, &ctx, &loaded.echo, config_path, &outcome)?;
    Ok(RunReport { files: outcome.files, manifest })
}

/// Flat JSON object of strings. `timestamp_unix` is the only field that
/// changes between identical runs.
fn write_manifest(
    experiment: Experiment,
    ctx: &RunContext,
    echo: &BTreeMap<String, String>,
    config_path: &Path,
    outcome: &Outcome,
) -> Result<PathBuf, CliError> {
    let mut m = BTreeMap::new();
    m.insert("experiment".to_owned(), experiment.name().to_owned());
    m.insert("seed".to_owned(), ctx.seed.to_string());
    m.insert("config_path".to_owned(), config_path.display().to_string());
    m.insert("trigkernel_version".to_owned(), env!("CARGO_PKG_VERSION").to_owned());
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    m.insert("timestamp_unix".to_owned(), now.to_string());
    for (k, v) in echo {
        m.insert(format!("config.{k}"), v.clone());
    }
    for (k, v) in &outcome.summary {
        m.insert(format!("result.{k}"), v.clone());
    }
    for (i, f) in outcome.files.iter().enumerate() {
        let name = f.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        m.insert(format!("output.{i}"), name);
    }
    let path = ctx.out.join(format!("{}_manifest.json", experiment.name()));
    let text = serde_json::to_string_pretty(&m).expect("string map serializes");
    std::fs::write(&path, text + "\n").map_err(|source| CliError::Output { path: path.clone(), source })?;
    Ok(path)
}
