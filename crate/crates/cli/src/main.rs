//! `bumpfield` command-line harness. Each subcommand reads one TOML config
//! and writes CSV/JSON artifacts plus the resolved config to its output
//! directory.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Run;
use crate::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "bumpfield",
    version,
    about = "Stochastic bump field experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config; every key is optional.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `output`.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `workers` (0 uses every core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Prints the default config and exits.
    #[arg(long, global = true)]
    print_defaults: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Long run: trajectory.csv and v_series.csv.
    Simulate,
    /// Drift and diffusion of V (database or burst mode).
    Estimate,
    /// Effective potential by histogram and Fokker-Planck integral.
    Potential,
    /// Parameter sweep of the cubic drift roots.
    Bifurcate,
    /// Waiting times between direction flips and the Kramers estimate.
    Switching,
    /// Diffusion-map model and coordinates.
    Dmap,
    /// Lift to a target Phi_2 by simulated annealing.
    Lift {
        /// Overrides `lift.target`.
        #[arg(long, allow_hyphen_values = true)]
        target: Option<f64>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.print_defaults {
        let mut cfg = RunConfig::default();
        cfg.resolve();
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(o) = cli.output {
        cfg.output = o;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Command::Lift { target: Some(t) } = cli.command {
        cfg.lift.target = t;
    }
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()?;
    }
    let ctx = Run::prepare(cfg)?;
    match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Estimate => commands::estimate(&ctx),
        Command::Potential => commands::potential(&ctx),
        Command::Bifurcate => commands::bifurcate(&ctx),
        Command::Switching => commands::switching(&ctx),
        Command::Dmap => commands::dmap(&ctx),
        Command::Lift { .. } => commands::lift(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
