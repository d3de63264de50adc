use std::path::PathBuf;

use thiserror::Error;

use crate::mdp::InstanceViolation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("instance is invalid ({} violation(s)); first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    InvalidInstance(Vec<InstanceViolation>),

    #[error("scheme does not fit the instance: {0}")]
    InvalidScheme(String),

    #[error(
        "promise closure broken at step {step}: promise index {promise} is not in the promise set of state {state}"
    )]
    PromiseClosure { step: usize, state: usize, promise: usize },

    #[error("history is malformed: {0}")]
    InvalidHistory(String),

    #[error("refusing to enumerate {required} {what}; the limit is {limit}")]
    SizeGuard {
        what: &'static str,
        required: u128,
        limit: u128,
    },

    #[error("oracle LP at step {step}, state {state} is unbounded")]
    UnboundedOracle { step: usize, state: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("vertex set does not cover edge ({0}, {1})")]
    NotACover(usize, usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal error: {0}")]
    Internal(String),
}
