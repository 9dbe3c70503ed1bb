//! The bidirectional classifier: shared input projection, independent
//! forward and backward block stacks, per-direction attention pooling and a
//! normalized linear head.

mod checkpoint;
mod config;
mod network;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_file, save_checkpoint, save_checkpoint_file, CheckpointHeader, TensorEntry,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::ModelConfig;
pub use network::{
    attn_pool, branch_forward, classify, input_projection, predict_window, BiMambaClassifier, Direction, ModelIds,
    PoolParams, Prediction, WindowOutput,
};

/// Scalar parameter count of [`ModelConfig::default`].
pub const DEFAULT_PARAM_COUNT: usize = 971_905;
