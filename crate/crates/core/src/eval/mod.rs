//! Cross-validation splits, the metric suite, a synthetic dataset
//! generator and the fold-by-fold protocol runner.

pub mod metrics;
mod protocol;
mod splits;
mod synth;

pub use metrics::{
    accuracy, apply_flip, auc, auc_trapezoid, compute_metrics, confusion, predict_labels, Confusion, MetricsReport,
};
pub use protocol::{
    attention_entropy, evaluate_fold, evaluate_from_artifacts, run_protocol, AggregateMetrics, AttentionSummary,
    DegenerateFold, FoldReport, MeanStd, ProtocolConfig, ProtocolReport, ReportConfig, WindowPrediction, REPORT_FILE,
    REPORT_FORMAT_VERSION, SPLITS_FILE,
};
pub use splits::{make_kfold_splits, make_loso_splits, validate_splits, FoldSplit, ProtocolKind};
pub use synth::{generate_synthetic, SynthSpec};
