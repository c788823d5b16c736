//! Command-line experiment runner for `enlarge-core`.

pub mod config;
pub mod experiments;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser};
use enlarge_core::Error;

pub use config::{Experiment, ExperimentConfig};
pub use experiments::run_experiment;
pub use report::{write_outputs, Gate, Outcome, Table};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_GATE_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_POWER: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "enlarge-sim",
    version,
    about = "Simulation experiments on progressively enlarged Lévy filtrations"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub experiment: Experiment,
    #[command(flatten)]
    pub options: RunOptions,
}

#[derive(Debug, Args)]
pub struct RunOptions {
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `root_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `n_paths`.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Configuration(_) | Error::Domain(_) => EXIT_CONFIG,
        Error::StatisticalPower { .. } => EXIT_POWER,
        Error::Model(_) | Error::Structural(_) => EXIT_GATE_FAILED,
    }
}

/// Loads the configuration and applies command-line overrides.
pub fn resolve(options: &RunOptions) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::load(&options.config)?;
    if let Some(s) = options.seed {
        config.root_seed = s;
    }
    if let Some(n) = options.paths {
        config.n_paths = n;
    }
    if let Some(o) = &options.out {
        config.output_dir = o.clone();
    }
    Ok(config)
}

/// Runs the experiment, writes its outputs and returns the exit code.
pub fn run(cli: &Cli) -> i32 {
    let config = match resolve(&cli.options) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let outcome = match run_experiment(&config, cli.experiment) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if let Err(e) = write_outputs(&outcome, &config, &config.output_dir) {
        eprintln!("error: cannot write outputs to {}: {e}", config.output_dir.display());
        return EXIT_GATE_FAILED;
    }
    print!("{}", outcome.summary(&config));
    if outcome.pass() {
        EXIT_PASS
    } else {
        EXIT_GATE_FAILED
    }
}
