use thiserror::Error;

use crate::instance::ValidationReport;
use crate::lp::{FeasibilityReport, LpSolution};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed instance document at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("unknown model tag {0:?} (expected \"basic\" or \"general\")")]
    UnknownModel(String),

    #[error("instance is invalid: {0}")]
    Invalid(ValidationReport),

    #[error("{what} exceeds cap: {actual} > {limit}")]
    CapExceeded {
        what: &'static str,
        limit: u64,
        actual: u64,
    },

    #[error("LP values are not feasible for the instance: {0}")]
    Infeasible(FeasibilityReport),

    #[error("simplex hit the iteration cap of {iterations}; best objective so far {}", best.objective)]
    IterationLimit {
        iterations: usize,
        best: Box<LpSolution>,
    },

    #[error("LP is infeasible")]
    LpInfeasible,

    #[error("LP is unbounded")]
    LpUnbounded,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Dimacs { line: usize, message: String },

    #[error("malformed formula: {0}")]
    Formula(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
