use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Prediction};
use crate::numerics::Real;
use crate::train::{predict_windows, train_fold, FoldArtifacts, FoldSummary, TrainConfig};
use crate::xmd::XmdWindow;

use super::metrics::{apply_flip, compute_metrics, MetricsReport};
use super::splits::{make_kfold_splits, make_loso_splits, validate_splits, FoldSplit, ProtocolKind};

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const SPLITS_FILE: &str = "splits.json";
pub const REPORT_FILE: &str = "report.json";

/// Which cross-validation to run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub protocol: ProtocolKind,
    /// Number of folds for K-fold; ignored by LOSO.
    pub k: usize,
    /// Shuffle seed for K-fold; ignored by LOSO.
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            protocol: ProtocolKind::Loso,
            k: 5,
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn make_splits(&self, participants: &[String]) -> Result<Vec<FoldSplit>> {
        match self.protocol {
            ProtocolKind::Loso => make_loso_splits(participants),
            ProtocolKind::Kfold => make_kfold_splits(participants, self.k, self.seed),
        }
    }
}

/// Test-set prediction for one window. `probability` is after the fold's
/// flip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowPrediction {
    pub participant_id: String,
    pub session: String,
    pub window_index: usize,
    pub label: u8,
    pub logit: f64,
    pub probability: f64,
    pub predicted: u8,
    pub attention_peak_forward: usize,
    pub attention_peak_backward: usize,
    pub attention_entropy_forward: f64,
    pub attention_entropy_backward: f64,
}

/// Mean attention weight per time step over a fold's test windows.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttentionSummary {
    pub mean_forward: Vec<f64>,
    pub mean_backward: Vec<f64>,
    pub mean_entropy_forward: f64,
    pub mean_entropy_backward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold_id: usize,
    pub test_participants: Vec<String>,
    pub n_test: usize,
    pub metrics: MetricsReport,
    pub training: FoldSummary,
    pub attention: AttentionSummary,
    pub predictions: Vec<WindowPrediction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegenerateFold {
    pub fold_id: usize,
    pub reason: String,
}

/// Mean and sample standard deviation over the folds where a metric is
/// defined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// `None` for an empty input. The standard deviation uses `n - 1` and is
    /// zero for a single value.
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(MeanStd { mean, std, n })
    }
}

/// Unweighted aggregate over non-degenerate folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub n_folds: usize,
    pub n_degenerate: usize,
    pub accuracy: Option<MeanStd>,
    pub auc: Option<MeanStd>,
    /// Folds whose test set has a single class.
    pub auc_undefined: usize,
    pub f1_positive: Option<MeanStd>,
    pub f1_negative: Option<MeanStd>,
    pub f1_macro: Option<MeanStd>,
}

impl AggregateMetrics {
    pub fn from_folds(folds: &[FoldReport], n_degenerate: usize) -> AggregateMetrics {
        let collect = |f: &dyn Fn(&MetricsReport) -> f64| -> Option<MeanStd> {
            MeanStd::of(&folds.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>())
        };
        let aucs: Vec<f64> = folds.iter().filter_map(|r| r.metrics.auc).collect();
        AggregateMetrics {
            n_folds: folds.len(),
            n_degenerate,
            accuracy: collect(&|m| m.accuracy),
            auc: MeanStd::of(&aucs),
            auc_undefined: folds.len() - aucs.len(),
            f1_positive: collect(&|m| m.f1_positive),
            f1_negative: collect(&|m| m.f1_negative),
            f1_macro: collect(&|m| m.f1_macro),
        }
    }
}

/// Configuration echo stored in every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub protocol: ProtocolConfig,
    pub train: TrainConfig,
    pub model: ModelConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub format_version: u32,
    pub config: ReportConfig,
    pub splits: Vec<FoldSplit>,
    pub folds: Vec<FoldReport>,
    pub degenerate: Vec<DegenerateFold>,
    pub aggregate: AggregateMetrics,
}

impl ProtocolReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<ProtocolReport> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        let report: ProtocolReport = serde_json::from_reader(std::io::BufReader::new(f))?;
        if report.format_version != REPORT_FORMAT_VERSION {
            return Err(Error::Corruption(format!(
                "report format version {} (expected {REPORT_FORMAT_VERSION})",
                report.format_version
            )));
        }
        Ok(report)
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) },
        )
        .0
}

/// Shannon entropy in nats.
pub fn attention_entropy(alpha: &[f64]) -> f64 {
    -alpha.iter().filter(|&&a| a > 0.0).map(|a| a * a.ln()).sum::<f64>()
}

fn participant_windows<'a>(windows: &'a [XmdWindow], ids: &[String]) -> Vec<&'a XmdWindow> {
    windows.iter().filter(|w| ids.contains(&w.participant_id)).collect()
}

fn fold_stem(fold_id: usize) -> String {
    format!("fold_{fold_id:02}")
}

/// Scores the test windows of one fold with trained artifacts.
pub fn evaluate_fold<T: Real>(
    split: &FoldSplit,
    artifacts: &FoldArtifacts<T>,
    windows: &[XmdWindow],
) -> Result<FoldReport> {
    let test = participant_windows(windows, &split.test);
    if test.is_empty() {
        return Err(Error::DegenerateFold("no test windows".into()));
    }
    let preds: Vec<Prediction> = predict_windows(&artifacts.model, &test)?;
    let raw: Vec<f64> = preds.iter().map(|p| p.probability).collect();
    let labels: Vec<u8> = test.iter().map(|w| w.label).collect();
    let s = &artifacts.summary;
    let metrics = compute_metrics(&raw, &labels, s.threshold, s.flip)?;
    let probs = apply_flip(&raw, s.flip);

    let steps = preds[0].alpha_forward.len();
    let mut attention = AttentionSummary {
        mean_forward: vec![0.0; steps],
        mean_backward: vec![0.0; steps],
        ..AttentionSummary::default()
    };
    let mut predictions = Vec::with_capacity(test.len());
    for ((w, p), &prob) in test.iter().zip(&preds).zip(&probs) {
        if p.alpha_forward.len() != steps {
            return Err(Error::shape("attention summary", "test windows differ in length"));
        }
        for (m, a) in attention.mean_forward.iter_mut().zip(&p.alpha_forward) {
            *m += a;
        }
        for (m, a) in attention.mean_backward.iter_mut().zip(&p.alpha_backward) {
            *m += a;
        }
        let (ef, eb) = (
            attention_entropy(&p.alpha_forward),
            attention_entropy(&p.alpha_backward),
        );
        attention.mean_entropy_forward += ef;
        attention.mean_entropy_backward += eb;
        predictions.push(WindowPrediction {
            participant_id: w.participant_id.clone(),
            session: w.session.clone(),
            window_index: w.window_index,
            label: w.label,
            logit: p.logit,
            probability: prob,
            predicted: u8::from(prob >= s.threshold),
            attention_peak_forward: argmax(&p.alpha_forward),
            attention_peak_backward: argmax(&p.alpha_backward),
            attention_entropy_forward: ef,
            attention_entropy_backward: eb,
        });
    }
    let n = test.len() as f64;
    for m in attention
        .mean_forward
        .iter_mut()
        .chain(attention.mean_backward.iter_mut())
    {
        *m /= n;
    }
    attention.mean_entropy_forward /= n;
    attention.mean_entropy_backward /= n;

    Ok(FoldReport {
        fold_id: split.fold_id,
        test_participants: split.test.clone(),
        n_test: test.len(),
        metrics,
        training: s.clone(),
        attention,
        predictions,
    })
}

fn check_fold(split: &FoldSplit, report: &FoldReport) -> Result<()> {
    if let Some(p) = report
        .predictions
        .iter()
        .find(|p| !split.test.contains(&p.participant_id))
    {
        return Err(Error::Protocol(format!(
            "fold {}: test prediction for {} who is not a test participant",
            split.fold_id, p.participant_id
        )));
    }
    let t = &report.training;
    if t.val_accuracy_at_threshold < t.val_accuracy_at_half {
        return Err(Error::Contract(format!(
            "fold {}: optimized threshold accuracy {} below 0.5-threshold accuracy {}",
            split.fold_id, t.val_accuracy_at_threshold, t.val_accuracy_at_half
        )));
    }
    Ok(())
}

fn wrap(fold_id: usize, e: Error) -> Error {
    Error::Fold {
        fold_id,
        source: Box::new(e),
    }
}

/// Trains and scores every fold in id order. Degenerate folds are recorded
/// and left out of the aggregate; any other fold error aborts the run. With
/// `artifacts_dir`, each fold's checkpoint and summary are written there
/// along with the splits.
pub fn run_protocol<T: Real>(
    windows: &[XmdWindow],
    splits: &[FoldSplit],
    protocol: &ProtocolConfig,
    train_cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    artifacts_dir: Option<&Path>,
) -> Result<ProtocolReport> {
    let participants = participants_of(windows);
    validate_splits(splits, &participants)?;
    if let Some(dir) = artifacts_dir {
        write_json(&dir.join(SPLITS_FILE), &splits)?;
    }
    let mut folds = Vec::new();
    let mut degenerate = Vec::new();
    for split in splits {
        log::info!("fold {}: testing {:?}", split.fold_id, split.test);
        let train = participant_windows(windows, &split.train);
        let artifacts = match train_fold::<T>(&train, train_cfg, model_cfg) {
            Ok(a) => a,
            Err(Error::DegenerateFold(reason)) => {
                log::warn!("fold {} is degenerate: {reason}", split.fold_id);
                degenerate.push(DegenerateFold {
                    fold_id: split.fold_id,
                    reason,
                });
                continue;
            }
            Err(e) => return Err(wrap(split.fold_id, e)),
        };
        if let Some(dir) = artifacts_dir {
            artifacts
                .save(dir, &fold_stem(split.fold_id))
                .map_err(|e| wrap(split.fold_id, e))?;
        }
        let report = match evaluate_fold(split, &artifacts, windows) {
            Ok(r) => r,
            Err(Error::DegenerateFold(reason)) => {
                degenerate.push(DegenerateFold {
                    fold_id: split.fold_id,
                    reason,
                });
                continue;
            }
            Err(e) => return Err(wrap(split.fold_id, e)),
        };
        check_fold(split, &report)?;
        log::info!(
            "fold {}: test accuracy {:.4}, auc {}",
            split.fold_id,
            report.metrics.accuracy,
            report.metrics.auc.map_or("n/a".into(), |a| format!("{a:.4}"))
        );
        folds.push(report);
    }
    Ok(assemble(protocol, train_cfg, model_cfg, splits, folds, degenerate))
}

/// Rebuilds the report from fold artifacts written by [`run_protocol`].
/// Folds without artifacts are reported as degenerate.
pub fn evaluate_from_artifacts(
    windows: &[XmdWindow],
    artifacts_dir: &Path,
    protocol: &ProtocolConfig,
    train_cfg: &TrainConfig,
) -> Result<ProtocolReport> {
    let path = artifacts_dir.join(SPLITS_FILE);
    let f = std::fs::File::open(&path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let splits: Vec<FoldSplit> = serde_json::from_reader(std::io::BufReader::new(f))?;
    validate_splits(&splits, &participants_of(windows))?;
    let mut folds = Vec::new();
    let mut degenerate = Vec::new();
    let mut model_cfg = None;
    for split in &splits {
        let stem = fold_stem(split.fold_id);
        if !artifacts_dir.join(format!("{stem}.ckpt")).exists() {
            degenerate.push(DegenerateFold {
                fold_id: split.fold_id,
                reason: "no trained artifacts".into(),
            });
            continue;
        }
        let artifacts = FoldArtifacts::<f32>::load(artifacts_dir, &stem).map_err(|e| wrap(split.fold_id, e))?;
        model_cfg.get_or_insert_with(|| artifacts.model.cfg.clone());
        match evaluate_fold(split, &artifacts, windows) {
            Ok(r) => {
                check_fold(split, &r)?;
                folds.push(r);
            }
            Err(Error::DegenerateFold(reason)) => degenerate.push(DegenerateFold {
                fold_id: split.fold_id,
                reason,
            }),
            Err(e) => return Err(wrap(split.fold_id, e)),
        }
    }
    let model_cfg = model_cfg.unwrap_or_default();
    Ok(assemble(protocol, train_cfg, &model_cfg, &splits, folds, degenerate))
}

fn assemble(
    protocol: &ProtocolConfig,
    train_cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    splits: &[FoldSplit],
    folds: Vec<FoldReport>,
    degenerate: Vec<DegenerateFold>,
) -> ProtocolReport {
    let aggregate = AggregateMetrics::from_folds(&folds, degenerate.len());
    ProtocolReport {
        format_version: REPORT_FORMAT_VERSION,
        config: ReportConfig {
            protocol: protocol.clone(),
            train: train_cfg.clone(),
            model: model_cfg.clone(),
        },
        splits: splits.to_vec(),
        folds,
        degenerate,
        aggregate,
    }
}

fn participants_of(windows: &[XmdWindow]) -> Vec<String> {
    let mut p: Vec<String> = windows.iter().map(|w| w.participant_id.clone()).collect();
    p.sort();
    p.dedup();
    p
}

fn write_json<V: Serialize + ?Sized>(path: &Path, value: &V) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), value)?;
    Ok(())
}
