use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CsbnError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    Validation(String),

    #[error("numerical failure at node {}: {detail}", .node + 1)]
    Numerical { node: usize, detail: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl CsbnError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CsbnError::InvalidArgument(msg.into())
    }

    pub fn numerical(node: usize, detail: impl Into<String>) -> Self {
        CsbnError::Numerical {
            node,
            detail: detail.into(),
        }
    }
}

impl From<std::io::Error> for CsbnError {
    fn from(e: std::io::Error) -> Self {
        CsbnError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CsbnError>;
