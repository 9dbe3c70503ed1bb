use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::canon::Feature;

/// How a raw cell becomes a canonical value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// Any nonzero reading becomes 1, zero stays 0.
    NonzeroIndicator,
    Scale(f64),
}

impl Transform {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::NonzeroIndicator => {
                if v != 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Transform::Scale(s) => v * s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimestampColumn {
    pub column: String,
    /// Multiplier that converts the column to seconds.
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub column: String,
    pub feature: Feature,
    pub transform: Transform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelColumns {
    pub interval_column: String,
    pub rating_column: String,
}

/// Column mapping from one dataset's CSV layout to the feature canon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaProfile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub timestamp: TimestampColumn,
    pub columns: Vec<ColumnMapping>,
    /// Columns whose absence from a header is an error. Other mapped
    /// columns are optional.
    #[serde(default)]
    pub required: Vec<String>,
    pub labels: LabelColumns,
}

const CLARE: &str = include_str!("../../profiles/clare.json");
const CLDRIVE: &str = include_str!("../../profiles/cldrive.json");
const GENERIC: &str = include_str!("../../profiles/generic.json");

/// Names accepted by [`SchemaProfile::builtin`].
pub const BUILTIN_PROFILES: [&str; 3] = ["clare", "cldrive", "generic"];

impl SchemaProfile {
    pub fn builtin(name: &str) -> Result<SchemaProfile> {
        let src = match name {
            "clare" => CLARE,
            "cldrive" => CLDRIVE,
            "generic" => GENERIC,
            other => {
                return Err(Error::Config(format!(
                    "unknown schema profile `{other}` (expected one of {})",
                    BUILTIN_PROFILES.join(", ")
                )))
            }
        };
        let p: SchemaProfile = serde_json::from_str(src)?;
        p.validate()?;
        Ok(p)
    }

    pub fn from_json_file(path: &Path) -> Result<SchemaProfile> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading profile {}", path.display()), e))?;
        let p: SchemaProfile = serde_json::from_str(&text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timestamp.scale.is_finite() && self.timestamp.scale > 0.0) {
            return Err(Error::Schema(format!(
                "profile `{}`: timestamp scale must be positive",
                self.name
            )));
        }
        let mut seen = [false; super::canon::NUM_FEATURES];
        for m in &self.columns {
            if std::mem::replace(&mut seen[m.feature.index()], true) {
                return Err(Error::Schema(format!(
                    "profile `{}`: feature {} mapped twice",
                    self.name, m.feature
                )));
            }
            if let Transform::Scale(s) = m.transform {
                if !s.is_finite() {
                    return Err(Error::Schema(format!(
                        "profile `{}`: non-finite scale for {}",
                        self.name, m.column
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whether the profile maps a source column onto `f`.
    pub fn provides(&self, f: Feature) -> bool {
        self.columns.iter().any(|m| m.feature == f)
    }
}
