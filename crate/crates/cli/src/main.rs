//! `unity`: run simulations, attack scenarios and invariant checks.

mod attack;
mod check;
mod error;
mod output;
mod params;
mod simulate;
mod stats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use unity_core::sim::{Latency, SlashingMode};

use crate::attack::AttackName;
use crate::check::Suite;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "unity", version, about = "Hybrid PoW/PoS consensus simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its artifacts.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `rng_seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
        /// perfect, fixed:SECS or uniform:LO:HI
        #[arg(long)]
        latency: Option<Latency>,
        /// off, evidence or dunkle:N
        #[arg(long)]
        slashing: Option<SlashingMode>,
    },
    /// Run an attack scenario over several trials.
    Attack {
        name: AttackName,
        /// Scenario parameters as `key = value` lines.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<u64>,
        /// First trial seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Run an invariant suite at reduced scale.
    Check {
        suite: Suite,
        /// Simulation config; defaults to a ten-day baseline.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize a blocks.jsonl tree dump.
    Stats {
        blocks: PathBuf,
        /// Skip blocks until this many of each kind are canonical.
        #[arg(long, default_value_t = 0)]
        warmup_blocks: u64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            config,
            seed,
            out,
            force,
            latency,
            slashing,
        } => simulate::run(&simulate::Args {
            config,
            seed,
            out,
            force,
            latency,
            slashing,
        }),
        Command::Attack {
            name,
            config,
            trials,
            seed,
            out,
            force,
        } => attack::run(name, config.as_deref(), trials, seed, &out, force),
        Command::Check { suite, config, seed } => check::run(suite, config.as_deref(), seed),
        Command::Stats { blocks, warmup_blocks } => stats::run(&blocks, warmup_blocks),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
