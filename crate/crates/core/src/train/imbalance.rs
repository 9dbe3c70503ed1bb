use crate::error::{Error, Result};
use crate::eval::metrics::{accuracy, auc, predict_labels};
use crate::numerics::{Real, Tape, Var};

use super::config::WeightingMode;

/// Positive-class weight for the loss from training label counts.
pub fn compute_pos_weight(n_pos: usize, n_neg: usize, mode: WeightingMode) -> Result<f64> {
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateFold(format!(
            "training labels have {n_pos} positives and {n_neg} negatives"
        )));
    }
    Ok(match mode {
        WeightingMode::InverseFrequency => n_neg as f64 / n_pos as f64,
        WeightingMode::PositiveFrequency => n_pos as f64 / n_neg as f64,
        WeightingMode::None => 1.0,
    })
}

/// Mean weighted binary cross-entropy of `logits` on the tape.
pub fn weighted_bce<T: Real>(tape: &mut Tape<T>, logits: Var, labels: &[T], pos_weight: f64) -> Result<Var> {
    tape.bce_with_logits(logits, labels, T::lit(pos_weight))
}

/// `−log σ(z)` without overflow.
fn neg_log_sigmoid(z: f64) -> f64 {
    crate::numerics::softplus(-z)
}

/// Plain-value counterpart of [`weighted_bce`]:
/// mean of `−[w·y·log σ(z) + (1−y)·log(1−σ(z))]`.
pub fn weighted_bce_value(logits: &[f64], labels: &[u8], pos_weight: f64) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            if y == 1 {
                pos_weight * neg_log_sigmoid(z)
            } else {
                neg_log_sigmoid(-z)
            }
        })
        .sum();
    total / logits.len().max(1) as f64
}

/// Decision threshold maximizing accuracy. Candidates are 0.5 and the
/// midpoints between consecutive distinct values of `{0} ∪ probs ∪ {1}`;
/// a sample is positive iff `p ≥ θ`. Ties go to the candidate nearest 0.5,
/// then to the smaller one.
pub fn optimize_threshold(probs: &[f64], labels: &[u8]) -> f64 {
    let mut pts: Vec<f64> = probs.iter().copied().filter(|p| p.is_finite()).collect();
    pts.push(0.0);
    pts.push(1.0);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut candidates: Vec<f64> = pts.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    candidates.push(0.5);

    let mut best: (f64, f64) = (f64::NEG_INFINITY, 0.5);
    for &theta in &candidates {
        let acc = accuracy(&predict_labels(probs, theta), labels);
        let better = acc > best.0
            || (acc == best.0
                && ((theta - 0.5).abs() < (best.1 - 0.5).abs()
                    || ((theta - 0.5).abs() == (best.1 - 0.5).abs() && theta < best.1)));
        if better {
            best = (acc, theta);
        }
    }
    best.1
}

/// Whether validation scores rank the classes inversely (AUC < 0.5). An
/// undefined AUC never flips.
pub fn calibrate_flip(probs: &[f64], labels: &[u8]) -> bool {
    auc(probs, labels).is_some_and(|a| a < 0.5)
}
