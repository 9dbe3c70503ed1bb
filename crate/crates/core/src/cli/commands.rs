use std::path::{Path, PathBuf};

use crate::bench::{benchmark_inference, BenchReport, PowerSampler};
use crate::error::{Error, Result};
use crate::eval::{evaluate_from_artifacts, generate_synthetic, run_protocol, ProtocolReport, REPORT_FILE};
use crate::ingest::{SchemaProfile, BUILTIN_PROFILES};
use crate::model::{load_checkpoint_file, BiMambaClassifier};
use crate::xmd::{load_windows, preprocess_dataset, serialize_windows, WindowSet, MANIFEST_FILE};

use super::atomic::{write_dir_atomically, write_file_atomically};
use super::config::RunConfig;

/// Name of the resolved configuration echoed into every output directory.
pub const RUN_CONFIG_FILE: &str = "run_config.toml";

/// A built-in profile name or a path to a profile JSON file.
pub fn resolve_profile(name_or_path: &str) -> Result<SchemaProfile> {
    if BUILTIN_PROFILES.contains(&name_or_path) {
        SchemaProfile::builtin(name_or_path)
    } else {
        SchemaProfile::from_json_file(Path::new(name_or_path))
    }
}

fn write_run_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let path = dir.join(RUN_CONFIG_FILE);
    std::fs::write(&path, cfg.to_toml_string()?).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn write_windows(set: &WindowSet, cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    write_dir_atomically(out, |dir| {
        serialize_windows(set, dir)?;
        write_run_config(dir, cfg)
    })?;
    Ok(out.join(MANIFEST_FILE))
}

/// Raw recordings to a window directory. Returns the manifest path.
pub fn run_preprocess(raw_dir: &Path, profile: &str, cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let profile = resolve_profile(profile)?;
    let set = preprocess_dataset(raw_dir, &profile, &cfg.preprocess)?;
    if set.windows.is_empty() {
        return Err(Error::Schema(format!("{} produced no windows", raw_dir.display())));
    }
    let dist = set.label_distribution();
    log::info!(
        "{} windows from {} participants ({} low, {} high, {} dropped)",
        set.windows.len(),
        set.participants().len(),
        dist.low,
        dist.high,
        set.meta.dropped_windows
    );
    write_windows(&set, cfg, out)
}

/// Synthetic window directory from the `[synth]` section.
pub fn run_synth(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let set = generate_synthetic(&cfg.synth)?;
    write_windows(&set, cfg, out)
}

/// Cross-validated training. `out` receives the splits, one checkpoint and
/// summary per fold, and the aggregate report.
pub fn run_train(windows: &Path, cfg: &RunConfig, out: &Path) -> Result<ProtocolReport> {
    let set = load_windows(windows)?;
    let splits = cfg.protocol.make_splits(&set.participants())?;
    write_dir_atomically(out, |dir| {
        write_run_config(dir, cfg)?;
        let report = run_protocol::<f32>(&set.windows, &splits, &cfg.protocol, &cfg.train, &cfg.model, Some(dir))?;
        report.write_json(&dir.join(REPORT_FILE))?;
        Ok(report)
    })
}

/// Re-scores the folds saved by [`run_train`] in `artifacts` on the
/// windows at `windows`. The protocol and training sections echoed in the
/// report come from the artifacts' own configuration when present.
pub fn run_evaluate(windows: &Path, artifacts: &Path, cfg: &RunConfig, out: &Path) -> Result<ProtocolReport> {
    let set = load_windows(windows)?;
    let trained_cfg = artifacts.join(RUN_CONFIG_FILE);
    let echo = if trained_cfg.exists() {
        RunConfig::from_file(&trained_cfg)?
    } else {
        cfg.clone()
    };
    let report = evaluate_from_artifacts(&set.windows, artifacts, &echo.protocol, &echo.train)?;
    write_dir_atomically(out, |dir| {
        write_run_config(dir, cfg)?;
        report.write_json(&dir.join(REPORT_FILE))
    })?;
    Ok(report)
}

/// Benchmarks a checkpoint, or a freshly initialized model from the
/// `[model]` section when none is given.
pub fn run_bench(checkpoint: Option<&Path>, cfg: &RunConfig, power: Box<dyn PowerSampler>) -> Result<BenchReport> {
    let model: BiMambaClassifier<f32> = match checkpoint {
        Some(path) => load_checkpoint_file(path)?,
        None => BiMambaClassifier::init(&cfg.model)?,
    };
    benchmark_inference(&model, &cfg.bench, power)
}

/// Writes a bench report to `out` when given.
pub fn write_bench_report(report: &BenchReport, out: Option<&Path>) -> Result<String> {
    let json = serde_json::to_string_pretty(report)?;
    if let Some(path) = out {
        write_file_atomically(path, json.as_bytes())?;
    }
    Ok(json)
}
