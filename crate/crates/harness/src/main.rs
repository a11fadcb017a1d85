use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use hk_harness::experiments::{run_ehrenfest, run_inspect_kernel, run_phase_invariance, run_propagate, run_scaling_study};
use hk_harness::{output, parse_config, ExperimentConfig};

#[derive(Parser)]
#[command(name = "hk-harness", version, about = "Herman–Kluk propagation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the initial state and compare with the reference.
    Propagate(Common),
    /// Error against the reference along the ħ ladder.
    Scaling(Common),
    /// Difference between two propagator settings along the ħ ladder.
    PhaseInvariance(Common),
    /// Threshold crossing times along the ħ ladder.
    Ehrenfest(Common),
    /// Fourier–Bargmann kernel decay and Schur bound.
    InspectKernel(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let text = std::fs::read_to_string(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))?;
    let mut cfg = parse_config(&text).with_context(|| format!("invalid configuration {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = common.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    Ok((cfg, dir))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let files = match &cli.command {
        Command::Propagate(c) => {
            let (cfg, dir) = load(c)?;
            output::write_propagate(&dir, &cfg, &run_propagate(&cfg)?)?
        }
        Command::Scaling(c) => {
            let (cfg, dir) = load(c)?;
            let report = run_scaling_study(&cfg)?;
            log::info!("slope {:?}, flags {:?}", report.slope, report.flags);
            output::write_ladder(&dir, "scaling", &cfg, &report)?
        }
        Command::PhaseInvariance(c) => {
            let (cfg, dir) = load(c)?;
            let report = run_phase_invariance(&cfg)?;
            log::info!("slope {:?}, flags {:?}", report.slope, report.flags);
            output::write_ladder(&dir, "phase_invariance", &cfg, &report)?
        }
        Command::Ehrenfest(c) => {
            let (cfg, dir) = load(c)?;
            let report = run_ehrenfest(&cfg)?;
            log::info!("nondecreasing {}, c {:?}", report.nondecreasing, report.c);
            output::write_ehrenfest(&dir, &cfg, &report)?
        }
        Command::InspectKernel(c) => {
            let (cfg, dir) = load(c)?;
            let report = run_inspect_kernel(&cfg)?;
            log::info!("monotone {}, Schur bound {:.6}", report.monotone, report.schur.bound);
            output::write_kernel(&dir, &cfg, &report)?
        }
    };
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}
