use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A distribution, tensor or kernel was built from invalid parameters.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// An operation was called with arguments of the wrong shape or arity.
    #[error("usage error: {0}")]
    Usage(String),
    /// The query is undefined for this input (e.g. a law identically zero).
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("enumeration cap exceeded: {what} (limit {limit})")]
    EnumerationCap { what: String, limit: usize },
    #[error("no counterexample schedule: {0}")]
    NoSchedule(String),
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
