//! Diagonal selective state-space layer: ZOH discretization, the sequential
//! scan and the gated residual block built around it.

mod block;
mod scan;
mod zoh;

pub use block::{block_forward, selective_params, BlockConfig, BlockParams, Dropout, DT_INIT_RANGE};
pub use scan::{scan_discretized, selective_scan};
pub use zoh::{discretize_zoh, ZOH_LIMIT};
