use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants are grouped by the kind of problem so that callers (the CLI in
/// particular) can map them onto stable exit codes, see [`Error::kind`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("arithmetic error in {op}: {detail}")]
    Arithmetic { op: &'static str, detail: String },

    #[error("index out of range in {op}: {detail}")]
    Index { op: &'static str, detail: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("format error: {0}")]
    Format(String),

    #[error("label integrity error at row {row}: {detail}")]
    LabelIntegrity { row: usize, detail: String },

    #[error("cannot stratify class `{class}`: {detail}")]
    Stratification { class: String, detail: String },

    #[error("failed to decode image {}: {detail}", path.display())]
    Decode { path: PathBuf, detail: String },

    #[error("checkpoint corrupted: {0}")]
    Corruption(String),

    #[error("checkpoint schema mismatch: {detail} [{}]", names.join(", "))]
    Schema { detail: String, names: Vec<String> },

    #[error("pretrained import failed: {detail} [{}]", names.join(", "))]
    Import { detail: String, names: Vec<String> },

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Divergence { epoch: usize, step: usize, detail: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input files or data.
    Data,
    /// Numerical or internal failures while running.
    Runtime,
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn index(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Index {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn contract(detail: impl Into<String>) -> Self {
        Error::Contract(detail.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Format(_)
            | Error::LabelIntegrity { .. }
            | Error::Stratification { .. }
            | Error::Decode { .. }
            | Error::Corruption(_)
            | Error::Schema { .. }
            | Error::Import { .. }
            | Error::Io { .. } => ErrorKind::Data,
            Error::Shape { .. }
            | Error::Arithmetic { .. }
            | Error::Index { .. }
            | Error::Contract(_)
            | Error::State(_)
            | Error::NonFinite { .. }
            | Error::Divergence { .. } => ErrorKind::Runtime,
        }
    }
}
