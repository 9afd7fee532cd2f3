use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation
    /// (non-positive distance, negative delay, NaN, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate design: all distances are identical")]
    DegenerateDesign,

    #[error("power delay profile has no bins")]
    EmptyPdp,

    #[error("measurement set has no sweeps")]
    NoSweeps,

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("{}: {msg}", path.display())]
    File { path: PathBuf, msg: String },

    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("seat {0} not found in layout")]
    SeatNotFound(u32),

    #[error("seat {0} is excluded for the lower transmitter position")]
    ExcludedPosition(u32),

    #[error("no model registered for {0}")]
    MissingModel(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
