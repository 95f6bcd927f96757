use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("invalid network spec: {0}")]
    Spec(String),

    #[error("activation tape does not belong to this network state")]
    StaleTape,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("drawer construction failed: {0}")]
    Drawer(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (config, schema, spec) rather
    /// than by something going wrong mid-run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Spec(_)
                | Error::Config(_)
                | Error::Schema(_)
                | Error::Row { .. }
                | Error::Split(_)
                | Error::Drawer(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
