//! `tclab` - experiment orchestrator for the dissipation laboratory.
//!
//! Usage: `tclab <experiment> --config <path> [--out <dir>] [--seed <u64>]
//! [--jobs <n>]`; `tclab --list` enumerates the experiments. The process
//! exits 0 exactly when every verdict passes.

mod config;
mod experiments;
mod report;

use anyhow::{bail, Context, Result};
use clap::Parser;
use config::ExperimentConfig;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "tclab",
    version,
    about = "rotating shear-flow dissipation laboratory"
)]
struct Cli {
    /// Experiment to run (must match the config's experiment field).
    experiment: Option<String>,

    /// Path to the TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory (overrides TCLAB_OUT and the config).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads for sweep tuples.
    #[arg(long)]
    jobs: Option<usize>,

    /// List the available experiments and exit.
    #[arg(long)]
    list: bool,
}

fn main() {
    let code = match run() {
        Ok(all_pass) => {
            if all_pass {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    std::process::exit(code);
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    if cli.list {
        for name in config::EXPERIMENTS {
            println!("{name}");
        }
        return Ok(true);
    }
    let experiment = match &cli.experiment {
        Some(e) => e.clone(),
        None => bail!("an experiment name is required (or --list)"),
    };
    let config_path = match &cli.config {
        Some(p) => p.clone(),
        None => bail!("--config <path> is required"),
    };
    let mut cfg = ExperimentConfig::load(&config_path)?;
    if cfg.experiment != experiment {
        bail!(
            "field 'experiment': config says '{}' but the command line asked for '{experiment}'",
            cfg.experiment
        );
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    let out_dir = cli
        .out
        .or_else(|| std::env::var("TCLAB_OUT").ok().map(PathBuf::from))
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("tclab-out"));
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("field 'out_dir': cannot create {}", out_dir.display()))?;

    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("cannot configure worker pool")?;
    }

    let started = std::time::Instant::now();
    let mut bundle = experiments::run(&cfg)?;
    bundle.manifest.insert(
        0,
        format!(
            "tclab {} experiment {}",
            env!("CARGO_PKG_VERSION"),
            experiment
        ),
    );
    bundle.manifest.push(format!(
        "wall_time_s {:.3}",
        started.elapsed().as_secs_f64()
    ));
    bundle.write_to(&out_dir)?;

    for v in &bundle.verdicts {
        println!(
            "{} {}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.id,
            v.detail
        );
    }
    Ok(bundle.all_pass())
}
