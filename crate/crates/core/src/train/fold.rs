use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::{accuracy, apply_flip, auc, compute_metrics, predict_labels};
use crate::model::{
    load_checkpoint_file, predict_window, save_checkpoint_file, BiMambaClassifier, ModelConfig, Prediction,
};
use crate::numerics::{clip_grad_norm, OptimizerState, Real, Tape, Tensor};
use crate::xmd::XmdWindow;

use super::config::{EarlyStopMetric, TrainConfig, WeightingMode};
use super::imbalance::{calibrate_flip, compute_pos_weight, optimize_threshold, weighted_bce, weighted_bce_value};
use super::split::{split_validation, ValidationKind, ValidationSplit};

const STREAM_SPLIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// One epoch of the training trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_auc: Option<f64>,
    pub val_f1_macro: f64,
    pub grad_norm_mean: f64,
}

/// Everything about a trained fold except the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub threshold: f64,
    pub flip: bool,
    pub pos_weight: f64,
    pub weighting_mode: WeightingMode,
    pub early_stop_metric: EarlyStopMetric,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub collapse_warnings: usize,
    pub validation_kind: ValidationKind,
    pub validation_participants: Vec<String>,
    pub n_train: usize,
    pub n_val: usize,
    /// Validation accuracy of the chosen rule and of a plain 0.5 cut, both
    /// after flipping.
    pub val_accuracy_at_threshold: f64,
    pub val_accuracy_at_half: f64,
    /// Accuracy on the inner training part with the chosen threshold and
    /// flip.
    pub train_accuracy: f64,
    pub trace: Vec<EpochRecord>,
}

/// Trained parameters plus their decision rule.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldArtifacts<T: Real> {
    pub model: BiMambaClassifier<T>,
    pub summary: FoldSummary,
}

impl<T: Real> FoldArtifacts<T> {
    /// Flipped-then-thresholded probability of the positive class.
    pub fn decide(&self, probability: f64) -> u8 {
        let p = if self.summary.flip {
            1.0 - probability
        } else {
            probability
        };
        u8::from(p >= self.summary.threshold)
    }

    /// Writes `<stem>.ckpt` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        save_checkpoint_file(&self.model, &dir.join(format!("{stem}.ckpt")))?;
        let path = dir.join(format!("{stem}.json"));
        let f = std::fs::File::create(&path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), &self.summary)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let model = load_checkpoint_file(&dir.join(format!("{stem}.ckpt")))?;
        let path = dir.join(format!("{stem}.json"));
        let f = std::fs::File::open(&path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        let summary = serde_json::from_reader(std::io::BufReader::new(f))?;
        Ok(FoldArtifacts { model, summary })
    }
}

fn window_tensor<T: Real>(w: &XmdWindow) -> Result<Tensor<T>> {
    Tensor::new([w.steps, w.width], w.z.iter().map(|&v| T::lit(f64::from(v))).collect())
}

/// Inference over many windows.
pub fn predict_windows<T: Real>(model: &BiMambaClassifier<T>, windows: &[&XmdWindow]) -> Result<Vec<Prediction>> {
    windows
        .iter()
        .map(|w| {
            if w.width != model.cfg.input_dim {
                return Err(Error::shape(
                    "predict",
                    format!("window width {} vs model input {}", w.width, model.cfg.input_dim),
                ));
            }
            model.predict(window_tensor(w)?)
        })
        .collect()
}

fn labels_of(windows: &[&XmdWindow]) -> Vec<u8> {
    windows.iter().map(|w| w.label).collect()
}

/// Trains one fold: inner validation split, weighted BCE with AdamW and
/// gradient clipping, early stopping with best-epoch restore, then flip
/// calibration and threshold selection on the validation part.
pub fn train_fold<T: Real>(
    windows: &[&XmdWindow],
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
) -> Result<FoldArtifacts<T>> {
    cfg.validate()?;
    let n_pos = windows.iter().filter(|w| w.label == 1).count();
    if n_pos == 0 || n_pos == windows.len() {
        return Err(Error::DegenerateFold(format!(
            "training windows contain a single class ({n_pos} of {} positive)",
            windows.len()
        )));
    }
    let split: ValidationSplit = split_validation(windows, cfg.val_fraction, &mut rng_stream(cfg.seed, STREAM_SPLIT));
    let train: Vec<&XmdWindow> = split.train.iter().map(|&i| windows[i]).collect();
    let val: Vec<&XmdWindow> = split.val.iter().map(|&i| windows[i]).collect();
    if val.is_empty() {
        return Err(Error::DegenerateFold(format!(
            "{} training windows leave no validation part",
            windows.len()
        )));
    }
    let train_pos = train.iter().filter(|w| w.label == 1).count();
    let pos_weight = compute_pos_weight(train_pos, train.len() - train_pos, cfg.weighting_mode)?;
    let val_labels = labels_of(&val);

    let mut model = BiMambaClassifier::<T>::init(model_cfg)?;
    let mut opt = OptimizerState::new(cfg.adamw(), &model.params);
    let mut shuffle_rng = rng_stream(cfg.seed, STREAM_SHUFFLE);
    let mut dropout_rng = rng_stream(cfg.seed, STREAM_DROPOUT);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut trace = Vec::new();
    let mut best: Option<(f64, f64, usize, BiMambaClassifier<T>)> = None;
    let mut since_best = 0;
    let mut collapse_warnings = 0;
    let mut stopped_early = false;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut norm_sum = 0.0;
        let mut batches = 0;
        for batch in order.chunks(cfg.batch_size) {
            model.params.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let w = train[i];
                let mut tape = Tape::new();
                let bound = model.params.bind(&mut tape);
                let z = tape.constant(window_tensor(w)?);
                let dropout = (model_cfg.dropout > 0.0)
                    .then_some((model_cfg.dropout, &mut dropout_rng as &mut dyn rand::RngCore));
                let out = predict_window(&mut tape, &bound, &model.ids, z, dropout)?;
                let loss = weighted_bce(&mut tape, out.logit, &[T::lit(f64::from(w.label))], pos_weight)?;
                let scaled = tape.scale(loss, T::lit(scale))?;
                loss_sum += tape.value(loss).data()[0].as_f64();
                tape.backward(scaled)?;
                model.params.accumulate_grads(&tape, &bound)?;
            }
            norm_sum += clip_grad_norm(&mut model.params, cfg.clip_norm);
            opt.step(&mut model.params)?;
            batches += 1;
        }

        let preds = predict_windows(&model, &val)?;
        let probs: Vec<f64> = preds.iter().map(|p| p.probability).collect();
        let logits: Vec<f64> = preds.iter().map(|p| p.logit).collect();
        let m = compute_metrics(&probs, &val_labels, 0.5, false)?;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss: weighted_bce_value(&logits, &val_labels, pos_weight),
            val_accuracy: m.accuracy,
            val_auc: m.auc,
            val_f1_macro: m.f1_macro,
            grad_norm_mean: norm_sum / batches as f64,
        };
        let both = val_labels.contains(&0) && val_labels.contains(&1);
        if both && (m.confusion.tp + m.confusion.fp == 0 || m.confusion.tn + m.confusion.fn_ == 0) {
            collapse_warnings += 1;
            log::warn!(
                "epoch {epoch}: validation predictions collapsed to one class (macro-F1 {:.3})",
                m.f1_macro
            );
        }
        log::info!(
            "epoch {epoch}: train loss {:.5}, val loss {:.5}, val acc {:.4}, val auc {}",
            rec.train_loss,
            rec.val_loss,
            rec.val_accuracy,
            rec.val_auc.map_or("n/a".to_string(), |a| format!("{a:.4}"))
        );
        // An undefined AUC (single-class validation) falls back to accuracy.
        let score = match cfg.early_stop_metric {
            EarlyStopMetric::Accuracy => m.accuracy,
            EarlyStopMetric::Auc => m.auc.unwrap_or(m.accuracy),
        };
        let improved = match &best {
            None => true,
            Some((s, l, _, _)) => score > *s || (score == *s && rec.val_loss < *l),
        };
        let val_loss = rec.val_loss;
        trace.push(rec);
        if improved {
            let mut snapshot = model.clone();
            snapshot.params.clear_grads();
            best = Some((score, val_loss, epoch, snapshot));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = epoch + 1 < cfg.max_epochs;
                break;
            }
        }
    }

    let (_, _, best_epoch, best_model) = best.expect("at least one epoch runs");
    let model = best_model;
    let val_probs: Vec<f64> = predict_windows(&model, &val)?.iter().map(|p| p.probability).collect();
    let flip = calibrate_flip(&val_probs, &val_labels);
    let flipped = apply_flip(&val_probs, flip);
    let threshold = optimize_threshold(&flipped, &val_labels);
    let val_accuracy_at_threshold = accuracy(&predict_labels(&flipped, threshold), &val_labels);
    let val_accuracy_at_half = accuracy(&predict_labels(&flipped, 0.5), &val_labels);
    let train_probs: Vec<f64> = predict_windows(&model, &train)?.iter().map(|p| p.probability).collect();
    let train_accuracy = accuracy(
        &predict_labels(&apply_flip(&train_probs, flip), threshold),
        &labels_of(&train),
    );
    if auc(&val_probs, &val_labels).is_none() {
        log::warn!("validation part has a single class; flip disabled and threshold chosen on accuracy alone");
    }

    Ok(FoldArtifacts {
        model,
        summary: FoldSummary {
            threshold,
            flip,
            pos_weight,
            weighting_mode: cfg.weighting_mode,
            early_stop_metric: cfg.early_stop_metric,
            best_epoch,
            epochs_run: trace.len(),
            stopped_early,
            collapse_warnings,
            validation_kind: split.kind,
            validation_participants: split.participants,
            n_train: train.len(),
            n_val: val.len(),
            val_accuracy_at_threshold,
            val_accuracy_at_half,
            train_accuracy,
            trace,
        },
    })
}
