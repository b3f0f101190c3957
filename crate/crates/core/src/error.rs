use thiserror::Error;

/// Errors raised by the platform model, analysis, simulator and harness.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// A platform or run parameter is outside its valid domain.
    #[error("configuration error: {0}")]
    Config(String),

    /// A flow or flow-set breaks one of its invariants.
    #[error("invalid flow {flow}: {reason}")]
    InvalidFlow { flow: String, reason: String },

    /// The flow-set as a whole is malformed (empty, duplicate priorities, ...).
    #[error("invalid flow-set: {0}")]
    InvalidFlowSet(String),

    /// Something the platform model guarantees did not hold.
    #[error("model violation: {0}")]
    ModelViolation(String),

    /// A flow-set file could not be parsed.
    #[error("line {line}: {field}: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
