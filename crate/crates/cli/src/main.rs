//! `mbsat` batch runner. Each subcommand reads an optional JSON config,
//! writes CSV artifacts to `--out` and records a `manifest.json` that
//! `mbsat replay` can re-run.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use mbsat::par::Execution;

use commands::Ctx;
use config::*;

#[derive(Parser, Debug)]
#[command(name = "mbsat", version, about = "Multibeam satellite experiment runner")]
struct Cli {
    /// JSON parameter block for the subcommand.
    #[arg(long, env = "MBSAT_CONFIG", global = true)]
    config: Option<PathBuf>,
    #[arg(long, env = "MBSAT_SEED", global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, env = "MBSAT_OUT", global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, env = "MBSAT_JOBS", global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Average CIR per frequency reuse factor.
    ChannelReport,
    /// MMSE multicast sum-rate and timing over beam and group sizes.
    PrecodingBench,
    /// Two-user rate regions, one CSV per strategy.
    RateRegion,
    /// Detection probability versus ISNR for the energy detectors.
    DetectionPd,
    /// SINR versus output back-off for each predistorter placement.
    SpdBench,
    /// Carrier-to-terminal assignment on synthetic radio environment maps.
    CarrierAssign,
    /// Broadcast/unicast threshold curves and minima.
    CachingThreshold,
    /// Re-runs a previous invocation from its manifest.
    Replay {
        manifest: PathBuf,
    },
}

const DEFAULT_SEED: u64 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    tool_version: String,
    subcommand: String,
    seed: u64,
    jobs: Option<usize>,
    config: Value,
    outputs: Vec<String>,
}

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", p.display()))
        }
    }
}

fn from_value<T: DeserializeOwned>(v: Value) -> Result<T> {
    serde_json::from_value(v).context("manifest config does not match the subcommand schema")
}

/// Runs `name` with a config already in JSON form. Returns the resolved
/// config and the artifact names.
fn dispatch(name: &str, cfg: Value, ctx: &Ctx) -> Result<(Value, Vec<String>)> {
    macro_rules! run {
        ($ty:ty, $f:path) => {{
            let c: $ty = from_value(cfg)?;
            let out = $f(&c, ctx)?;
            (serde_json::to_value(&c)?, out)
        }};
    }
    Ok(match name {
        "channel-report" => run!(ChannelReportConfig, commands::channel_report),
        "precoding-bench" => run!(PrecodingBenchConfig, commands::precoding_bench),
        "rate-region" => run!(RateRegionConfig, commands::rate_region),
        "detection-pd" => run!(DetectionConfig, commands::detection_pd),
        "spd-bench" => run!(SpdBenchConfig, commands::spd_bench),
        "carrier-assign" => run!(CarrierAssignConfig, commands::carrier_assign),
        "caching-threshold" => run!(CachingConfig, commands::caching_threshold),
        other => bail!("unknown subcommand {other:?}"),
    })
}

fn resolved(command: &Command, path: Option<&Path>) -> Result<(&'static str, Value)> {
    Ok(match command {
        Command::ChannelReport => ("channel-report", serde_json::to_value(load::<ChannelReportConfig>(path)?)?),
        Command::PrecodingBench => ("precoding-bench", serde_json::to_value(load::<PrecodingBenchConfig>(path)?)?),
        Command::RateRegion => ("rate-region", serde_json::to_value(load::<RateRegionConfig>(path)?)?),
        Command::DetectionPd => ("detection-pd", serde_json::to_value(load::<DetectionConfig>(path)?)?),
        Command::SpdBench => ("spd-bench", serde_json::to_value(load::<SpdBenchConfig>(path)?)?),
        Command::CarrierAssign => ("carrier-assign", serde_json::to_value(load::<CarrierAssignConfig>(path)?)?),
        Command::CachingThreshold => ("caching-threshold", serde_json::to_value(load::<CachingConfig>(path)?)?),
        Command::Replay { .. } => unreachable!("replay has no config block"),
    })
}

fn execution(jobs: Option<usize>) -> Result<Execution> {
    match jobs {
        Some(0) => bail!("--jobs must be >= 1"),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("cannot size the worker pool")?;
            Ok(Execution::Parallel)
        }
        _ => Ok(Execution::available()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let (name, cfg, seed, jobs, out) = match &cli.command {
        Command::Replay { manifest } => {
            let text = std::fs::read_to_string(manifest).with_context(|| format!("cannot read {}", manifest.display()))?;
            let m: Manifest = serde_json::from_str(&text).context("invalid manifest")?;
            let out = match cli.out {
                Some(o) => o,
                None => manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
            };
            (m.subcommand, m.config, cli.seed.unwrap_or(m.seed), cli.jobs.or(m.jobs), out)
        }
        cmd => {
            let (name, cfg) = resolved(cmd, cli.config.as_deref())?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("results"));
            (name.to_string(), cfg, cli.seed.unwrap_or(DEFAULT_SEED), cli.jobs, out)
        }
    };
    commands::prepare_out(&out)?;
    let ctx = Ctx { out: out.clone(), seed, exec: execution(jobs)? };
    let (config, outputs) = dispatch(&name, cfg, &ctx)?;
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: name,
        seed,
        jobs,
        config,
        outputs,
    };
    let path = out.join(MANIFEST);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;
    for o in &manifest.outputs {
        println!("{}", out.join(o).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
