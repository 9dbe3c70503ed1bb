//! Fold training with class-imbalance handling: positive weighting,
//! weighted BCE, early stopping, threshold selection and flip calibration.

mod config;
mod fold;
mod imbalance;
mod split;

pub use config::{EarlyStopMetric, TrainConfig, WeightingMode};
pub use fold::{predict_windows, train_fold, EpochRecord, FoldArtifacts, FoldSummary};
pub use imbalance::{calibrate_flip, compute_pos_weight, optimize_threshold, weighted_bce, weighted_bce_value};
pub use split::{split_validation, ValidationKind, ValidationSplit};
