//! Shared error type for the toolkit.

use thiserror::Error;

/// All fallible operations in this crate return `Result<T, Error>`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported rank {rank} (supported: 1..=3)")]
    UnsupportedRank { rank: usize },

    /// Malformed container file. `offset` is the byte position at which the
    /// problem was detected.
    #[error("format error at byte {offset}: {what}")]
    Format { offset: u64, what: String },

    #[error("budget {budget} too small: smallest feasible size is {needed}")]
    BudgetTooSmall { budget: usize, needed: usize },

    #[error("argument {value} outside supported range |x| <= {limit}")]
    UnsupportedRange { value: f64, limit: f64 },

    #[error("theorem precondition violated: {0}")]
    TheoremPrecondition(String),

    #[error("search space of {size} tuples exceeds exhaustive limit {limit}")]
    SearchSpaceOverflow { size: u128, limit: u128 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn format(offset: u64, what: impl Into<String>) -> Self {
        Error::Format {
            offset,
            what: what.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
