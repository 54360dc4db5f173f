use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FirError {
    /// Shapes, dimensions or settings that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller-supplied argument is outside its valid range.
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numeric error in layer {layer}: {message}")]
    Numeric { layer: usize, message: String },

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl FirError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FirError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numbers themselves rather than the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, FirError::Numeric { .. } | FirError::NonFiniteLoss(_))
    }
}

pub type Result<T> = std::result::Result<T, FirError>;
