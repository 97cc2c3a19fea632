//! `singular-eft <experiment> [--config <path>] [--set key=value ...] --out <dir>`

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod error;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::config::Config;
use crate::error::CliError;
use crate::experiments::Experiment;

#[derive(Debug, Parser)]
#[command(
    name = "singular-eft",
    version,
    about = "Renormalization experiments for singular potentials"
)]
struct Args {
    experiment: Experiment,
    /// Flat `key = value` file; `#` starts a comment.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set cutoffs=5.5,6.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Directory receiving `<experiment>.csv` and `<experiment>.meta`.
    #[arg(long)]
    out: PathBuf,
}

fn execute(args: &Args) -> Result<(), CliError> {
    let config = Config::resolve(args.experiment, args.config.as_deref(), &args.set)?;
    eprintln!(
        "{}: config {} -> {}",
        config.experiment.name(),
        config.hash(),
        args.out.display()
    );
    let table = match experiments::run(&config) {
        Ok(t) => t,
        Err(e) => {
            output::remove_outputs(&args.out, &config);
            return Err(e);
        }
    };
    for path in output::write_outputs(&args.out, &config, &table)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
