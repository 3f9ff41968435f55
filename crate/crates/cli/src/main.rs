//! Command-line front-end: `catsim <experiment> --config <path> [--out <prefix>] [--seed N]`.
//!
//! Exit codes: 0 on success, 2 on configuration or validation errors, 3 on
//! numerical or truncation failures during the run. Unexpected I/O failures
//! while writing outputs exit 1. Partial outputs are removed on failure.

mod config;
mod output;
mod run;

use clap::Parser;

use crate::config::Experiment;

/// Deterministic batch experiments on the truncated-Fock-space simulator.
#[derive(Parser, Debug)]
#[command(name = "catsim", version, about)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    experiment: Experiment,
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: std::path::PathBuf,
    /// Output path prefix (overrides the config's `out`).
    #[arg(long)]
    out: Option<String>,
    /// RNG seed (overrides the config's `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(run::run(&cli));
}
