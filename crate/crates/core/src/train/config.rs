use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::AdamWConfig;

/// How the positive-class weight is derived from training label counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    /// `n_neg / n_pos`.
    #[default]
    InverseFrequency,
    /// `n_pos / n_neg`.
    PositiveFrequency,
    /// Always 1.
    None,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStopMetric {
    #[default]
    Accuracy,
    Auc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub clip_norm: f64,
    pub patience: usize,
    pub val_fraction: f64,
    pub early_stop_metric: EarlyStopMetric,
    pub weighting_mode: WeightingMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 128,
            max_epochs: 100,
            clip_norm: 0.5,
            patience: 15,
            val_fraction: 0.05,
            early_stop_metric: EarlyStopMetric::Accuracy,
            weighting_mode: WeightingMode::InverseFrequency,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!("val_fraction {} outside (0, 1)", self.val_fraction));
        }
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return bad("patience, batch_size and max_epochs must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.clip_norm > 0.0) || self.weight_decay < 0.0 {
            return bad(format!(
                "lr {} / clip_norm {} / weight_decay {} out of range",
                self.lr, self.clip_norm, self.weight_decay
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return bad("AdamW betas must lie in [0, 1) and eps be positive".into());
        }
        Ok(())
    }
}
