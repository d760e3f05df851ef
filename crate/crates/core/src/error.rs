use thiserror::Error;

use crate::clustering::SeedOrderViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The input document is not well-formed JSON or has the wrong shape.
    #[error("syntax error: {0}")]
    Syntax(String),

    /// A well-formed input violates a domain invariant. `path` names the
    /// offending field, e.g. `buys[1].fail_prob`.
    #[error("invalid {path}: {message}")]
    Validation { path: String, message: String },

    /// An operation would enumerate `2^q` failure configurations beyond the
    /// configured guard.
    #[error("{operation} enumerates 2^{q} configurations; limit is q <= {limit}")]
    EnumerationLimit {
        operation: &'static str,
        q: usize,
        limit: usize,
    },

    #[error(
        "sell {sell} has {size} incident buys; exhaustive subset search is limited to {limit}"
    )]
    SubsetLimit {
        sell: usize,
        size: usize,
        limit: usize,
    },

    #[error("invalid seed order: {0}")]
    SeedOrder(#[from] SeedOrderViolation),

    #[error("no cluster has unexplained probability mass left to split")]
    NoSplittableCluster,

    #[error("cluster distribution mismatch: {0}")]
    DistributionMismatch(String),

    #[error("malformed linear program: {0}")]
    LpConstruction(String),

    /// Something that should be impossible by construction: an LP built by
    /// this crate came back infeasible or unbounded, or a returned solution
    /// failed verification.
    #[error("internal solver error: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }
}
