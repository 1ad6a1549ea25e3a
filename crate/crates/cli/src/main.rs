use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dtslpm::model::LatentMode;
use dtslpm_cli::commands;
use dtslpm_cli::config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "dtslpm", version, about = "Latent position models for multivariate count time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate a count panel from a reference design
    Simulate,
    /// Maximum a posteriori estimate by L-BFGS
    FitMap,
    /// Posterior draws by Hamiltonian Monte Carlo, streamed per chain
    FitHmc,
    /// Align draws to the MAP estimate and write posterior summaries
    Summarize,
    /// Stability report and convergence diagnostics
    Diagnose,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Static,
    Dynamic,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply to anything it omits
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for simulation, optimizer restarts and sampling
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of HMC chains
    #[arg(long, global = true)]
    chains: Option<usize>,
    /// HMC iterations per chain, burn-in included
    #[arg(long, global = true)]
    iterations: Option<usize>,
    /// Leading HMC iterations discarded from each chain
    #[arg(long, global = true)]
    burn_in: Option<usize>,
    /// Keep every n-th post-burn-in draw
    #[arg(long, global = true)]
    thin: Option<usize>,
    /// Latent positions fixed over time (static) or a random walk (dynamic)
    #[arg(long, value_enum, global = true)]
    mode: Option<Mode>,
    /// Dimension of the latent space
    #[arg(long, global = true)]
    latent_dim: Option<usize>,
    /// Directory for artifacts; later commands read earlier ones from here
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Count CSV to fit (defaults to the simulated panel in the output directory)
    #[arg(long, global = true)]
    counts: Option<PathBuf>,
    /// Worker threads for parallel chains and alignment
    #[arg(long, env = "DTSLPM_WORKERS", global = true)]
    workers: Option<usize>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let c = &cli.common;

    if let Some(n) = c.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().context("configuring the worker pool")?;
    }

    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: c.seed,
        chains: c.chains,
        iterations: c.iterations,
        burn_in: c.burn_in,
        thin: c.thin,
        mode: c.mode.map(|m| match m {
            Mode::Static => LatentMode::Static,
            Mode::Dynamic => LatentMode::Dynamic,
        }),
        latent_dim: c.latent_dim,
        output_dir: c.output_dir.clone(),
        counts: c.counts.clone(),
    });
    cfg.validate()?;

    let (name, warnings) = match cli.command {
        Command::Simulate => ("simulate", commands::simulate(&cfg)?),
        Command::FitMap => ("fit-map", commands::fit_map(&cfg)?),
        Command::FitHmc => ("fit-hmc", commands::fit_hmc(&cfg)?),
        Command::Summarize => ("summarize", commands::summarize(&cfg)?),
        Command::Diagnose => ("diagnose", commands::diagnose(&cfg)?),
    };
    println!(
        "{name}: wrote {} (config {}, seed {}, {} warning(s))",
        cfg.output_dir.join(format!("manifest-{name}.json")).display(),
        &cfg.hash()[..12],
        cfg.seed,
        warnings.len()
    );
    Ok(())
}
