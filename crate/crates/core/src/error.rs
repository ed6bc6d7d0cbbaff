use thiserror::Error;

use crate::groups::GroupElement;

/// Errors raised by constructions and diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point window is missing coordinates {missing:?}")]
    MissingCoordinates { missing: Vec<GroupElement> },

    #[error("{what} needs {needed} elements, budget is {budget}")]
    Budget { what: String, needed: u64, budget: u64 },

    #[error("window of {coords} coordinates exceeds the exact cap of {cap}; use Monte Carlo mode")]
    WindowTooLarge { coords: usize, cap: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("diagnostic failure: {0}")]
    Diagnostic(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

/// An error together with the part of a report computed before it occurred.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{error}")]
pub struct Partial<T: std::fmt::Debug> {
    pub error: Error,
    pub partial: T,
}
