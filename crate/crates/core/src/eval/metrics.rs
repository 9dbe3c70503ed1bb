use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Classification metrics for one set of predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub accuracy: f64,
    /// Absent when only one class is present.
    pub auc: Option<f64>,
    pub f1_positive: f64,
    pub f1_negative: f64,
    pub f1_macro: f64,
    pub confusion: Confusion,
    pub threshold: f64,
    pub flip: bool,
}

fn check_inputs(probs: &[f64], labels: &[u8]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Contract("metrics need at least one prediction".into()));
    }
    if probs.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Contract(format!("label {l} is not binary")));
    }
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite {
            stage: "metrics input".into(),
        });
    }
    Ok(())
}

/// Area under the ROC curve as the probability that a random positive
/// outscores a random negative, ties counting one half. Computed from
/// mid-ranks in `O(n log n)`; `None` when a class is missing.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// ROC AUC by trapezoidal integration over the thresholds at every
/// distinct score.
pub fn auc_trapezoid(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0.0, 0.0);
    let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let (tpr, fpr) = (tp / n_pos, fp / n_neg);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    Some(area)
}

/// Hard predictions: positive iff `p ≥ threshold`.
pub fn predict_labels(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p >= threshold)).collect()
}

pub fn confusion(preds: &[u8], labels: &[u8]) -> Confusion {
    let mut c = Confusion::default();
    for (&p, &l) in preds.iter().zip(labels) {
        match (p, l) {
            (1, 1) => c.tp += 1,
            (0, 0) => c.tn += 1,
            (1, _) => c.fp += 1,
            _ => c.fn_ += 1,
        }
    }
    c
}

pub fn accuracy(preds: &[u8], labels: &[u8]) -> f64 {
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    correct as f64 / labels.len().max(1) as f64
}

/// F1 from counts; 0 when precision + recall is 0.
fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if tp == 0 || denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// `1 − p` for every probability when `flip` is set.
pub fn apply_flip(probs: &[f64], flip: bool) -> Vec<f64> {
    if flip {
        probs.iter().map(|p| 1.0 - p).collect()
    } else {
        probs.to_vec()
    }
}

/// Metrics after optional flipping and thresholding.
pub fn compute_metrics(probs: &[f64], labels: &[u8], threshold: f64, flip: bool) -> Result<MetricsReport> {
    check_inputs(probs, labels)?;
    let p = apply_flip(probs, flip);
    let preds = predict_labels(&p, threshold);
    let c = confusion(&preds, labels);
    let f1_positive = f1(c.tp, c.fp, c.fn_);
    let f1_negative = f1(c.tn, c.fn_, c.fp);
    Ok(MetricsReport {
        n: labels.len(),
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        auc: auc(&p, labels),
        f1_positive,
        f1_negative,
        f1_macro: (f1_positive + f1_negative) / 2.0,
        confusion: c,
        threshold,
        flip,
    })
}
