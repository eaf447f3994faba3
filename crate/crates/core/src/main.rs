use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use mixret::config::ExperimentConfig;
use mixret::error::Error;
use mixret::experiment::{replay_config, run, write_outputs, RunOutput};
use mixret::report::emit_report;

/// Simulate scheduled return counts of mixing sources and compare them with
/// their Poisson and geometric limits, exact laws and explicit error bounds.
#[derive(Debug, Parser)]
#[command(name = "mixret", version)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, required_unless_present = "replay", conflicts_with = "replay")]
    config: Option<PathBuf>,

    /// Re-run the config embedded in a previous result.json.
    #[arg(long)]
    replay: Option<PathBuf>,

    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the number of worker threads.
    #[arg(long)]
    workers: Option<usize>,

    /// Output directory for result.json and the CSV files.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Compute the exact law when the enumeration budget allows.
    #[arg(long, overrides_with = "no_exact")]
    exact: bool,

    /// Skip the exact law.
    #[arg(long, overrides_with = "exact")]
    no_exact: bool,
}

fn execute(cli: &Cli) -> Result<RunOutput, Error> {
    let mut config = match (&cli.config, &cli.replay) {
        (Some(path), _) => ExperimentConfig::from_path(path)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
            replay_config(&text)?
        }
        (None, None) => unreachable!("clap requires one of --config/--replay"),
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    if cli.exact {
        config.exact = true;
    }
    if cli.no_exact {
        config.exact = false;
    }
    run(&config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let output = match execute(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    print!("{}", emit_report(&output));
    if let Some(dir) = &cli.out {
        if let Err(e) = write_outputs(&output, dir) {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    }
    ExitCode::SUCCESS
}
