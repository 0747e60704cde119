use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid label {value} at row {row}, column {column} (expected -1 or +1)")]
    InvalidLabel {
        row: usize,
        column: usize,
        value: f64,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A source class has zero mass while the target asks for a nonzero share of it.
    #[error("attribute {attribute}: no {class} samples in the source distribution but the target mass is {target}")]
    DegenerateAttribute {
        attribute: usize,
        class: &'static str,
        target: f64,
    },

    #[error("attribute {attribute}: the evaluation set has no {class} samples")]
    DegenerateEvaluation {
        attribute: usize,
        class: &'static str,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error in {path:?} at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(
        path: impl Into<PathBuf>,
        offset: u64,
        message: impl Into<String>,
    ) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }
}
