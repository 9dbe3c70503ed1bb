//! Dense tensors, a reverse-mode tape, AdamW and a finite-difference checker.
//!
//! Everything the model computes goes through [`Tape`]. Tests and gradient
//! checks run at `f64`; training and benchmarking default to `f32`.

mod gradcheck;
mod optim;
mod params;
mod real;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use optim::{clip_grad_norm, grad_norm, AdamWConfig, OptimizerState};
pub use params::{Bound, ParamId, ParamStore};
pub use real::{Precision, Real};
pub use tape::{sigmoid, softplus, CustomOp, Tape, Unary, Var, MAX_CONV_WIDTH};
pub use tensor::Tensor;

/// Default epsilon for layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;
