use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::BenchConfig;
use crate::error::{Error, Result};
use crate::eval::{ProtocolConfig, SynthSpec};
use crate::model::ModelConfig;
use crate::train::TrainConfig;
use crate::xmd::PipelineConfig;

/// Every tunable of every subcommand. Read from a TOML file whose tables
/// mirror the fields; missing keys take their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, replaces the seed of every section.
    pub seed: Option<u64>,
    pub preprocess: PipelineConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub protocol: ProtocolConfig,
    pub synth: SynthSpec,
    pub bench: BenchConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Applies a seed override (flag over file) to every section and checks
    /// all sections.
    pub fn resolve(mut self, seed_flag: Option<u64>) -> Result<RunConfig> {
        if let Some(seed) = seed_flag.or(self.seed) {
            self.seed = Some(seed);
            self.model.seed = seed;
            self.train.seed = seed;
            self.protocol.seed = seed;
            self.synth.seed = seed;
            self.bench.seed = seed;
        }
        self.preprocess.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.synth.validate()?;
        self.bench.validate()?;
        Ok(self)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}
