use thiserror::Error;

/// Errors raised by the dictionary-learning routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RomdError {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("svd did not converge after {sweeps} sweeps")]
    SvdNotConverged { sweeps: usize },

    #[error("column {index} has zero norm")]
    ZeroColumn { index: usize },

    #[error("atom index {k} out of range (K = {atoms})")]
    AtomOutOfRange { k: usize, atoms: usize },

    #[error("non-finite value in conjugate gradient at iteration {iteration}")]
    CgNonFinite { iteration: usize },

    #[error("non-finite ADMM state at iteration {iteration}")]
    AdmmNonFinite { iteration: usize },

    #[error("svd failed for atom {atom}: {source}")]
    AtomSvd {
        atom: usize,
        #[source]
        source: Box<RomdError>,
    },

    #[error("block is identically zero; no rank-one factor to extract")]
    ZeroBlock,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, RomdError>;

impl RomdError {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        RomdError::DimensionMismatch {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}

impl From<std::io::Error> for RomdError {
    fn from(e: std::io::Error) -> Self {
        RomdError::Io(e.to_string())
    }
}

impl From<csv::Error> for RomdError {
    fn from(e: csv::Error) -> Self {
        RomdError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for RomdError {
    fn from(e: serde_json::Error) -> Self {
        RomdError::Io(e.to_string())
    }
}
