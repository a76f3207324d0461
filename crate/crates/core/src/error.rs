use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The requested functional is not defined (or has infinite mean) for the
    /// given `(d, β, σ)`. The message names the inequality that failed.
    #[error("regime violation: {0}")]
    Regime(String),

    #[error("singular evaluation: {0}")]
    Singular(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("window error: {0}")]
    Window(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("no convergence after {iterations} iterations (best value {best})")]
    Convergence {
        iterations: usize,
        best: f64,
        trace: Vec<f64>,
    },

    #[error("replica {index}: {source}")]
    Replica { index: u64, source: Box<LabError> },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Io(e.to_string())
    }
}
