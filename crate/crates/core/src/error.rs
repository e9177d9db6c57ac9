use thiserror::Error;

use crate::vector::Space;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("space mismatch: operator acts on {expected}, vector lives in {found}")]
    SpaceMismatch { expected: Space, found: Space },

    #[error("index {0} is outside the representable range 1..=2^127-1")]
    IndexOverflow(u128),

    #[error("arithmetic overflow: {0}")]
    Overflow(String),

    #[error("index {index} lies beyond the schedule coverage [1, {end})")]
    BeyondSchedule { index: u128, end: u128 },

    #[error("operator sequence is not block structured")]
    NotBlockStructured,

    #[error("no checkpoint satisfies the selection predicate")]
    EmptySelection,

    #[error("sample set is empty")]
    EmptySamples,

    #[error("perturbation direction is the zero vector")]
    ZeroDirection,

    #[error("vector is zero")]
    ZeroVector,

    #[error("pair is degenerate (x = y)")]
    DegeneratePair,

    #[error("invalid vector: {0}")]
    InvalidVector(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value produced at index {0}")]
    NonFinite(u128),
}

impl Error {
    pub fn overflow(what: impl Into<String>) -> Self {
        Error::Overflow(what.into())
    }

    pub fn invalid(what: impl Into<String>) -> Self {
        Error::InvalidArgument(what.into())
    }

    /// Overflow-class errors map to a dedicated CLI exit code.
    pub fn is_overflow(&self) -> bool {
        matches!(self, Error::Overflow(_) | Error::IndexOverflow(_))
    }
}
