use std::path::PathBuf;

use thiserror::Error;

/// Every fallible operation in the crate reports one of these.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("numeric domain violation in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("non-finite value produced by {stage}")]
    NonFinite { stage: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error in {path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("recording {0} contains no samples")]
    EmptyRecording(PathBuf),

    #[error("participant {0} has no baseline session")]
    MissingBaseline(String),

    #[error("corrupt data: {0}")]
    Corruption(String),

    #[error("degenerate fold: {0}")]
    DegenerateFold(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("fold {fold_id}: {source}")]
    Fold {
        fold_id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Prefixes the stage of a non-finite error with `stage`; other errors
    /// pass through unchanged.
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            Error::NonFinite { stage: inner } => Error::NonFinite {
                stage: format!("{stage}/{inner}"),
            },
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(source: std::io::Error) -> Self {
        Error::Io {
            context: "i/o".to_string(),
            source,
        }
    }
}
