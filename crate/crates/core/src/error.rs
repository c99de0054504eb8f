//! Error type shared by every module.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SsmError>;

#[derive(Debug, Error)]
pub enum SsmError {
    #[error("parameter `{param}` out of domain: {msg}")]
    Domain { param: String, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure at step {step}: {msg}")]
    Numerical { step: usize, msg: String },

    #[error("observations impossible under the model at step {step}: {msg}")]
    ImpossibleData { step: usize, msg: String },

    #[error("all probability mass left the state grid at step {step}; widen the grid bounds")]
    GridCoverage { step: usize },

    #[error("particle depletion at step {step}: every particle has zero weight")]
    Depletion { step: usize },

    #[error("state mode search failed: {0}")]
    ModeFinding(String),

    #[error("estimability study failed: {0}")]
    Estimability(String),

    #[error("bootstrap unreliable: {0}")]
    Reliability(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SsmError {
    pub fn domain(param: impl Into<String>, msg: impl Into<String>) -> Self {
        SsmError::Domain {
            param: param.into(),
            msg: msg.into(),
        }
    }

    pub fn numerical(step: usize, msg: impl Into<String>) -> Self {
        SsmError::Numerical {
            step,
            msg: msg.into(),
        }
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            SsmError::Config(_) | SsmError::Unsupported(_) => 1,
            SsmError::Data(_)
            | SsmError::Domain { .. }
            | SsmError::ImpossibleData { .. }
            | SsmError::Io(_)
            | SsmError::Csv(_)
            | SsmError::Json(_) => 2,
            SsmError::Numerical { .. }
            | SsmError::GridCoverage { .. }
            | SsmError::Depletion { .. }
            | SsmError::ModeFinding(_)
            | SsmError::Estimability(_)
            | SsmError::Reliability(_) => 3,
        }
    }
}
