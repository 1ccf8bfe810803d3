use thiserror::Error;

use crate::graph::VertexId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vertex budget of {budget} exceeded")]
    BudgetExceeded { budget: usize },

    #[error("vertex {0:?} is a frontier vertex; its boundary would be undercounted")]
    FrontierUnderflow(VertexId),

    #[error("truncated xi tail has mass {mass:e} above tolerance {tolerance:e}")]
    TailUncertain { mass: f64, tolerance: f64 },

    #[error("only {found} surviving replicas, need at least {needed}")]
    InsufficientSurvivors { found: u64, needed: u64 },

    #[error("config hash mismatch: record has {expected}, current config gives {found}")]
    ConfigMismatch { expected: String, found: String },

    #[error("position depth {0} exceeds the packed label capacity")]
    DepthOverflow(u32),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("malformed config or record: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
