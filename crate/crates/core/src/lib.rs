// `!(x > 0.0)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod cli;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod numerics;
pub mod ssm;
pub mod train;
pub mod xmd;

pub use error::{Error, Result};
