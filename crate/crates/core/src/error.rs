use std::io;

use thiserror::Error;

/// Errors produced by the training engine.
///
/// The variants fall into three groups that the command line maps onto exit
/// codes: contract/configuration problems, numeric failures, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible.
    #[error("{op}: dimension mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A precondition of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A file does not have the expected layout.
    #[error("format error: {0}")]
    Format(String),

    /// A file is truncated or its contents disagree with its own header.
    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("unsupported format version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    /// Malformed dataset contents. `row` is 1-based when known.
    #[error("data error{}: {msg}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Data { row: Option<usize>, msg: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// A gradient or parameter became NaN or infinite.
    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },

    /// Training diverged.
    #[error("numeric blow-up at epoch {epoch}: {detail}")]
    NumericBlowup { epoch: usize, detail: String },

    /// Invalid run configuration, naming the offending field.
    #[error("invalid config field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn data(row: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Data {
            row,
            msg: msg.into(),
        }
    }

    /// True for failures caused by numbers going bad during training.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteGradient { .. } | Error::NumericBlowup { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
