use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssm::BlockConfig;
use crate::xmd::XMD_WIDTH;

/// Architecture of the bidirectional classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Per-step input width (3F).
    pub input_dim: usize,
    pub d_model: usize,
    pub d_state: usize,
    pub d_conv: usize,
    pub expand: usize,
    pub layers_per_direction: usize,
    /// Dropout inside each residual block, training only.
    pub dropout: f64,
    /// Initialization seed.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: XMD_WIDTH,
            d_model: 128,
            d_state: 16,
            d_conv: 4,
            expand: 2,
            layers_per_direction: 4,
            dropout: 0.1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn block(&self) -> BlockConfig {
        BlockConfig {
            d_model: self.d_model,
            d_state: self.d_state,
            d_conv: self.d_conv,
            expand: self.expand,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.layers_per_direction == 0 {
            return Err(Error::Config(format!(
                "input_dim and layers_per_direction must be positive: {self:?}"
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        self.block().validate()
    }

    /// Scalar parameter count implied by the configuration.
    pub fn num_params(&self) -> usize {
        let d = self.d_model;
        let input = d * self.input_dim + d;
        let stacks = 2 * self.layers_per_direction * self.block().num_params();
        let pools = 2 * (d * d + d + d);
        let head = 2 * (2 * d) + 2 * d + 1;
        input + stacks + pools + head
    }
}
