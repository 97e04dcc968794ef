//! Error type shared by every module of the core library.

use core::fmt;

/// Every fallible operation in this crate returns this error type.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// An argument violates a documented precondition (non-positive length,
    /// empty sweep list, unsupported combination, ...). `what` names the
    /// offending field or rule.
    InvalidArgument { what: &'static str },
    /// An iterative kernel (eigensolver, Newton loop) failed to reach its
    /// internal tolerance.
    NonConvergence { what: &'static str },
    /// A basis order beyond `j_max` (or beyond the available table) was
    /// requested.
    OrderOutOfRange { j: usize, j_max: usize },
    /// Eigenvalues from `largest_safe + 1` on fall below the representable
    /// floor; the basis cannot be built at the requested size.
    UnderflowOrder { requested: usize, largest_safe: usize },
    /// An operation would divide by an eigenvalue whose computed value is
    /// below the trust floor (the `1/λ_j` amplification is meaningless there).
    EigenvalueUnderflow { order: usize, largest_trusted: usize },
    /// The cutoff-selection inequality is still satisfied at the highest
    /// trusted order, so the answer is not determined by this basis.
    BasisTooSmall { j_max_trusted: usize },
    /// The operation is defined for a different protocol than the one given.
    ProtocolMismatch { what: &'static str },
    /// A parameter left its mathematical domain (e.g. transmission outside
    /// (0, 1]).
    DomainError { what: &'static str },
    /// A sample grid is too coarse for the requested quadrature or transform.
    GridTooCoarse { points: usize, needed: usize },
    /// A sample grid does not cover the interval the operation integrates
    /// over.
    GridTooNarrow,
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::InvalidArgument { what } => write!(f, "invalid argument: {what}"),
            CoreError::NonConvergence { what } => write!(f, "iteration failed to converge: {what}"),
            CoreError::OrderOutOfRange { j, j_max } => {
                write!(f, "order {j} out of range (basis holds orders 0..={j_max})")
            }
            CoreError::UnderflowOrder { requested, largest_safe } => write!(
                f,
                "eigenvalue underflow at requested order {requested}; largest safe order is {largest_safe}"
            ),
            CoreError::EigenvalueUnderflow { order, largest_trusted } => write!(
                f,
                "eigenvalue at order {order} is below the trust floor (largest trusted order: {largest_trusted})"
            ),
            CoreError::BasisTooSmall { j_max_trusted } => write!(
                f,
                "selection bound not yet violated at the highest trusted order ({j_max_trusted}); build a larger basis"
            ),
            CoreError::ProtocolMismatch { what } => write!(f, "protocol mismatch: {what}"),
            CoreError::DomainError { what } => write!(f, "domain error: {what}"),
            CoreError::GridTooCoarse { points, needed } => {
                write!(f, "grid too coarse: {points} points, need at least {needed}")
            }
            CoreError::GridTooNarrow => write!(f, "grid does not cover the required interval"),
        }
    }
}

/// Convenience alias used across the crate.
pub type Result<T> = core::result::Result<T, CoreError>;
