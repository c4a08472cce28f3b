//! Command-line experiment runner: calibration statistics, paired exact
//! and reduced inference, threshold sweeps and hardware reports.

pub mod commands;
pub mod config;
pub mod experiment;

use anyhow::Result;
use clap::{Parser, Subcommand};

pub use config::{Bounds, CommonArgs, Mode, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "xbar",
    version,
    about = "Bit-serial early-termination simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write digit probabilities and estimate tables
    Stats(CommonArgs),
    /// Exact vs reduced inference with hardware comparison
    Run(CommonArgs),
    /// Reduction and accuracy over a list of thresholds
    Sweep(CommonArgs),
    /// Hardware comparison only
    Report(CommonArgs),
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Stats(a) => commands::cmd_stats(&a.resolve()?).map(drop),
        Command::Run(a) => commands::cmd_run(&a.resolve()?).map(drop),
        Command::Sweep(a) => commands::cmd_sweep(&a.resolve()?).map(drop),
        Command::Report(a) => commands::cmd_report(&a.resolve()?).map(drop),
    }
}
