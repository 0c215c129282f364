use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use trigkernel_cli::{run, Experiment};

/// Run one trig-network experiment from a TOML config.
#[derive(Debug, Parser)]
#[command(name = "trigkernel", version)]
struct Cli {
    #[arg(value_enum)]
    experiment: Experiment,

    #[arg(long)]
    config: PathBuf,

    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli.experiment, &cli.config, cli.seed, cli.out.as_deref()) {
        Ok(report) => {
            for f in report.files.iter().chain(std::iter::once(&report.manifest)) {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
