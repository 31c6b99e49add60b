//! Shared error type for the navigation stack.

use thiserror::Error;

/// Errors produced by map, planner, and trajectory operations.
#[derive(Error, Debug)]
pub enum Error {
    /// An argument violated a precondition (non-finite value, bad shape, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two grids or sequences that must agree in shape do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A query time fell outside the valid span of a trajectory.
    #[error("t = {t} outside valid span [{min}, {max})")]
    OutOfDomain { t: f64, min: f64, max: f64 },

    /// The search exhausted its open set without reaching the goal.
    #[error("no path found: open set exhausted")]
    NoPathFound,

    /// The search hit its node budget before reaching the goal.
    #[error("search budget exceeded after {expanded} expansions")]
    BudgetExceeded { expanded: usize },

    /// A scenario configuration failed validation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// A binary grid file did not match the expected layout.
    #[error("malformed grid file: {0}")]
    MalformedFile(String),
}

pub type Result<T> = std::result::Result<T, Error>;
