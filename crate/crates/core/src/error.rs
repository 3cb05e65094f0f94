use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shape, length, emptiness).
    #[error("contract violation: {0}")]
    Contract(String),
    /// Gram-Schmidt hit a (numerically) rank-deficient input.
    #[error("degenerate rotation: column {column} has residual norm {norm:e}")]
    DegenerateRotation { column: usize, norm: f64 },
    /// A pose or point set too degenerate to measure (zero trunk, zero bone sum, coincident points).
    #[error("degenerate pose: {0}")]
    DegeneratePose(String),
    /// A loss or gradient became NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! contract {
    ($($arg:tt)*) => {
        $crate::error::Error::Contract(alloc::format!($($arg)*))
    };
}
pub(crate) use contract;
