use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("protocol violation: {0}")]
    Protocol(&'static str),

    #[error("learning rate {gamma} outside the stability range [0, 2/L) with 2/L = {bound}")]
    Stability { gamma: f64, bound: f64 },

    #[error("degenerate interpolation direction: theta_0 and theta_k coincide")]
    DegenerateDirection,

    #[error("eigenvalue solver did not converge; matrix (row-major):\n{dump}")]
    Eigen { dump: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
