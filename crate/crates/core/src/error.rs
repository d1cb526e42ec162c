//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by failure class so that callers (in particular the
/// CLI) can map them onto exit codes: configuration problems, data problems,
/// and numerical problems.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A cell or header could not be parsed; `location` names the offending
    /// row/column so the user can find it in the file.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// Structurally malformed input (duplicate timestamps, calendar gaps,
    /// ragged rows, ...).
    #[error("format error: {0}")]
    Format(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("unknown node '{0}'")]
    UnknownNode(String),

    #[error("validation error: {0}")]
    Validation(String),

    /// A node whose observed values have no spread cannot be standardized.
    #[error("degenerate scale for node '{0}': zero variance")]
    DegenerateScale(String),

    /// Rank-deficient or non-invertible linear system. The message names the
    /// deficient columns when they can be identified.
    #[error("singular system: {0}")]
    Singular(String),

    /// A simulated path overflowed; `step` is the first offending time index.
    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Coarse failure class used by the CLI exit-code mapping:
    /// 2 = configuration, 3 = data, 4 = numerical.
    pub fn exit_class(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Validation(_) => 2,
            Error::Io(_)
            | Error::Parse { .. }
            | Error::Format(_)
            | Error::Dimension(_)
            | Error::UnknownNode(_)
            | Error::InsufficientData(_) => 3,
            Error::DegenerateScale(_) | Error::Singular(_) | Error::Diverged { .. } => 4,
        }
    }
}
