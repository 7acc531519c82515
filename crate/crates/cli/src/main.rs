//! `simulate`: run a power sweep and write results.csv / results.json.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use cellfree::harness::{sweep_with, SweepOptions};
use cellfree::output::emit;
use cellfree::{Preset, SimConfig, StrategyRegistry};
use clap::Parser;

#[derive(Debug, Parser)]
#[command(name = "simulate", about = "Cell-free / user-centric mmWave massive MIMO rate sweep")]
struct Args {
    /// TOML file overriding fields of the preset.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,

    /// Number of Monte Carlo trials (overrides the config).
    #[arg(long)]
    trials: Option<usize>,

    /// Output directory.
    #[arg(long)]
    out: PathBuf,

    /// Base parameter set: `paper` (full size) or `desk` (small, fast).
    #[arg(long, default_value = "paper")]
    preset: Preset,

    /// Write each trial's scenario JSON and channel tensor under <out>/scenarios.
    #[arg(long)]
    dump_scenarios: bool,

    /// Comma-separated serving schemes, e.g. `CF,UC`.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,

    /// Comma-separated CSI sources, e.g. `PCSI,ICSI`.
    #[arg(long, value_delimiter = ',')]
    csi: Option<Vec<String>>,

    /// Comma-separated beamforming architectures, e.g. `FD,HY`.
    #[arg(long, value_delimiter = ',')]
    bf: Option<Vec<String>>,

    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn build_config(args: &Args) -> Result<SimConfig> {
    let base = SimConfig::preset(args.preset);
    let mut cfg = match &args.config {
        Some(path) => {
            SimConfig::from_toml_file(path, &base).with_context(|| format!("loading config {}", path.display()))?
        }
        None => base,
    };
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(s) = &args.schemes {
        cfg.schemes = s.clone();
    }
    if let Some(s) = &args.csi {
        cfg.csi_modes = s.clone();
    }
    if let Some(s) = &args.bf {
        cfg.beamformers = s.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: Args) -> Result<bool> {
    let cfg = build_config(&args)?;
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    let opts = SweepOptions {
        dump_dir: args.dump_scenarios.then(|| args.out.join("scenarios")),
    };
    log::info!(
        "running {} trials: M={} K={} N={} seed={}",
        cfg.trials,
        cfg.num_aps,
        cfg.num_users,
        cfg.users_per_ap,
        cfg.master_seed
    );
    let start = Instant::now();
    let result = sweep_with(&cfg, &StrategyRegistry::builtin(), &opts)?;
    emit(&args.out, &cfg, &result)?;
    log::info!(
        "wrote {} rows to {} in {:.1}s",
        result.rows.len(),
        args.out.display(),
        start.elapsed().as_secs_f64()
    );
    for f in &result.failures {
        log::error!("{f}");
    }
    Ok(result.failures.is_empty())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some combinations failed; see log");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
