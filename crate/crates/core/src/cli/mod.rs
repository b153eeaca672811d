//! Command-line front end: `simulate`, `continue`, `rare`, `meanfield` and
//! `net-stats`, each driven by a TOML experiment file.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::CliError;
pub use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "efnet", version, about = "Equation-free analysis of majority-rule dynamics on random networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for ensemble evaluation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory, overriding `output.directory`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Temporal simulation of the microscopic model.
    Simulate,
    /// Pseudo-arclength continuation of coarse equilibria.
    Continue,
    /// Fokker–Planck profile and Kramers escape time.
    Rare,
    /// Mean-field bifurcation diagram and comparison report.
    Meanfield,
    /// Structural statistics of the configured network.
    NetStats,
}

/// Runs one subcommand; the error carries the exit code.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let cfg = ExperimentConfig::load(path).map_err(CliError::Config)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // a second initialization only fails when a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
    match cli.command {
        Command::Simulate => commands::cmd_simulate(&cfg, &out).map(|_| ()),
        Command::Continue => commands::cmd_continue(&cfg, &out).map(|_| ()),
        Command::Rare => commands::cmd_rare(&cfg, &out).map(|_| ()),
        Command::Meanfield => commands::cmd_meanfield(&cfg, &out).map(|_| ()),
        Command::NetStats => commands::cmd_net_stats(&cfg, &out).map(|_| ()),
    }
}
