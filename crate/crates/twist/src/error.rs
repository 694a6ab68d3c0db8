//! Error type shared across the crate.
//!
//! Contract violations (bad mode index, shape mismatches between library
//! calls) panic; recoverable conditions (bad user parameters, degenerate
//! numerics, malformed input files) are reported through [`Error`].

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A user-supplied parameter is out of its feasible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The input is numerically degenerate for the requested operation.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// The layer clustering scan could not be tuned to the requested
    /// cluster count.
    #[error("layer clustering did not reach {target} clusters after {attempts} threshold adjustments (closest was {closest})")]
    ClusterCountUnreachable {
        target: usize,
        closest: usize,
        attempts: usize,
    },

    /// A layered edge-list file failed to parse.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Preprocessing with component intersection left no shared nodes.
    #[error("empty node intersection after intersecting layer '{layer}'")]
    EmptyIntersection { layer: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code the CLI maps this error to: 2 for data problems,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::Parse { .. }
            | Error::EmptyIntersection { .. }
            | Error::Io(_) => 2,
            Error::Degenerate(_) | Error::ClusterCountUnreachable { .. } => 3,
        }
    }
}
