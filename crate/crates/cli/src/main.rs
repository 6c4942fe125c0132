// `!(x > 0.0)` guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Batch front-end for the particle-disk billiard simulator.
//!
//! Exit codes: 0 success, 1 self-test or runtime failure, 2 configuration
//! error. The default config path can be set via DISK_BILLIARD_CONFIG.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, Overrides, RunConfig, EXIT_CONFIG};

#[derive(Parser)]
#[command(
    name = "disk-billiard",
    about = "Event-driven open billiard with a rotating disk between two heat baths"
)]
struct Cli {
    /// Path to a flat key=value configuration file.
    #[arg(long, global = true, env = "DISK_BILLIARD_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sampler/geometry/invariant self-test battery.
    Validate(Overrides),
    /// Dump an event log (JSON lines) up to the configured horizon.
    Simulate(Overrides),
    /// Build and serialize a steady-state snapshot ensemble.
    Steady(Overrides),
    /// Estimate the long-free-flight tail curve and its power-law exponent.
    Tails(Overrides),
    /// Perturbed-ensemble relaxation experiment (power-law vs exponential).
    Mixing(Overrides),
    /// Per-reservoir absorbed/emitted energy rates.
    Flux(Overrides),
    /// Evaluate the analytic flight/regeneration-time bounds.
    Bounds(Overrides),
}

fn load(config: Option<&PathBuf>, o: &Overrides) -> Result<RunConfig, ConfigError> {
    RunConfig::load(config.map(|p| p.as_path()), o)
}

type Runner = fn(&RunConfig) -> anyhow::Result<i32>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cfg, run): (Result<RunConfig, ConfigError>, Runner) = match &cli.command {
        Command::Validate(o) => (load(cli.config.as_ref(), o), commands::run_validate),
        Command::Simulate(o) => (load(cli.config.as_ref(), o), commands::run_simulate),
        Command::Steady(o) => (load(cli.config.as_ref(), o), commands::run_steady),
        Command::Tails(o) => (load(cli.config.as_ref(), o), commands::run_tails),
        Command::Mixing(o) => (load(cli.config.as_ref(), o), commands::run_mixing),
        Command::Flux(o) => (load(cli.config.as_ref(), o), commands::run_flux),
        Command::Bounds(o) => (load(cli.config.as_ref(), o), commands::run_bounds),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    match run(&cfg) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
