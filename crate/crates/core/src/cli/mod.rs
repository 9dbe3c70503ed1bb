//! Command-line front end: `preprocess`, `synth`, `train`, `evaluate` and
//! `bench`, configured by a TOML file plus flag overrides.

mod atomic;
mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use atomic::{write_dir_atomically, write_file_atomically};
pub use commands::{
    resolve_profile, run_bench, run_evaluate, run_preprocess, run_synth, run_train, write_bench_report, RUN_CONFIG_FILE,
};
pub use config::RunConfig;

use crate::bench::{FilePowerSampler, NullPowerSampler, PowerSampler};
use crate::error::Result;
use crate::eval::ProtocolKind;
use crate::numerics::Precision;

#[derive(Debug, Parser)]
#[command(name = "cogload", version, about = "Eye-tracking cognitive load classification")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random component; overrides the file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (file for `bench`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Raw recordings to XMD windows.
    Preprocess(PreprocessArgs),
    /// Synthetic XMD windows.
    Synth(SynthArgs),
    /// Cross-validated training with per-fold checkpoints and a report.
    Train(TrainArgs),
    /// Re-score trained folds.
    Evaluate(EvaluateArgs),
    /// Inference latency benchmark.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Directory with one subdirectory per participant.
    #[arg(long)]
    pub raw: PathBuf,
    /// Built-in profile name or profile JSON path.
    #[arg(long, default_value = "clare")]
    pub profile: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub participants: Option<usize>,
    /// Windows per participant.
    #[arg(long)]
    pub windows: Option<usize>,
    /// Steps per window.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub burst_rate_low: Option<f64>,
    #[arg(long)]
    pub burst_rate_high: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ProtocolArg {
    Loso,
    Kfold,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Window manifest or its directory.
    #[arg(long)]
    pub windows: PathBuf,
    #[arg(long, value_enum)]
    pub protocol: Option<ProtocolArg>,
    /// Folds for K-fold.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Window manifest or its directory.
    #[arg(long)]
    pub windows: PathBuf,
    /// Output directory of `train`.
    #[arg(long)]
    pub artifacts: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Checkpoint to benchmark; a freshly initialized model otherwise.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Steps per input window.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,
    /// Power sensor file polled during the timed loop.
    #[arg(long)]
    pub power_file: Option<PathBuf>,
    /// Multiplier from the sensor file's unit to watts.
    #[arg(long, default_value_t = 1e-6)]
    pub power_scale: f64,
}

fn default_out(name: &str) -> PathBuf {
    PathBuf::from(name)
}

/// Merges flags into the file configuration.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Synth(a) => {
            let s = &mut cfg.synth;
            s.participants = a.participants.unwrap_or(s.participants);
            s.windows_per_participant = a.windows.unwrap_or(s.windows_per_participant);
            s.steps = a.steps.unwrap_or(s.steps);
            s.separation = a.separation.unwrap_or(s.separation);
            s.burst_rate_low = a.burst_rate_low.unwrap_or(s.burst_rate_low);
            s.burst_rate_high = a.burst_rate_high.unwrap_or(s.burst_rate_high);
        }
        Command::Train(a) => {
            if let Some(p) = a.protocol {
                cfg.protocol.protocol = match p {
                    ProtocolArg::Loso => ProtocolKind::Loso,
                    ProtocolArg::Kfold => ProtocolKind::Kfold,
                };
            }
            cfg.protocol.k = a.k.unwrap_or(cfg.protocol.k);
            cfg.train.max_epochs = a.max_epochs.unwrap_or(cfg.train.max_epochs);
        }
        Command::Bench(a) => {
            let b = &mut cfg.bench;
            b.iterations = a.iterations.unwrap_or(b.iterations);
            b.warmup_iterations = a.warmup.unwrap_or(b.warmup_iterations);
            b.steps = a.steps.unwrap_or(b.steps);
            b.batch_size = a.batch_size.unwrap_or(b.batch_size);
            if let Some(p) = a.precision {
                b.precision = match p {
                    PrecisionArg::F32 => Precision::F32,
                    PrecisionArg::F64 => Precision::F64,
                };
            }
        }
        Command::Preprocess(_) | Command::Evaluate(_) => {}
    }
    cfg.resolve(cli.seed)
}

/// Runs a parsed command line; returns what to print on stdout.
pub fn execute(cli: &Cli) -> Result<String> {
    let cfg = resolve_config(cli)?;
    let out = |name: &str| cli.out.clone().unwrap_or_else(|| default_out(name));
    match &cli.command {
        Command::Preprocess(a) => {
            let manifest = run_preprocess(&a.raw, &a.profile, &cfg, &out("windows"))?;
            Ok(manifest.display().to_string())
        }
        Command::Synth(_) => {
            let manifest = run_synth(&cfg, &out("synthetic"))?;
            Ok(manifest.display().to_string())
        }
        Command::Train(a) => {
            let dir = out("run");
            let report = run_train(&a.windows, &cfg, &dir)?;
            Ok(serde_json::to_string_pretty(&report.aggregate)?)
        }
        Command::Evaluate(a) => {
            let dir = out("evaluation");
            let report = run_evaluate(&a.windows, &a.artifacts, &cfg, &dir)?;
            Ok(serde_json::to_string_pretty(&report.aggregate)?)
        }
        Command::Bench(a) => {
            let power: Box<dyn PowerSampler> = match &a.power_file {
                Some(p) => Box::new(FilePowerSampler::new(p, a.power_scale)),
                None => Box::new(NullPowerSampler),
            };
            let report = run_bench(a.checkpoint.as_deref(), &cfg, power)?;
            write_bench_report(&report, cli.out.as_deref())
        }
    }
}

/// Entry point of the `cogload` binary. Usage errors exit with 2, runtime
/// errors with 1.
pub fn main_with_args<I, A>(args: I) -> ExitCode
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
