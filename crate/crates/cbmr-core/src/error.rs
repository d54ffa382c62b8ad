//! Error type shared across the core.

use alloc::string::String;

/// Errors surfaced by the core numerics.
///
/// Fits that merely fail to converge are not errors — they come back as
/// results with `converged = false` so callers can inspect diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Input failed validation (shape mismatch, bad value, inconsistent data).
    Invalid(String),
    /// A linear predictor overflowed `exp`.
    Overflow { linear_predictor: f64 },
    /// The information matrix is singular (or effectively so); standard
    /// errors are refused rather than regularized.
    SingularInformation { condition: f64 },
    /// Line search failed even after a steepest-descent restart.
    LineSearchFailed,
    /// After pruning, a voxel row has no remaining basis support.
    EmptyBasisRow { voxel: usize },
    /// Evaluation point lies outside the half-open knot range.
    OutsideKnotSpan { point: f64, lo: f64, hi: f64 },
}

impl core::fmt::Display for CoreError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CoreError::Invalid(msg) => write!(f, "invalid input: {msg}"),
            CoreError::Overflow { linear_predictor } => {
                write!(f, "intensity overflow at linear predictor {linear_predictor}")
            }
            CoreError::SingularInformation { condition } => write!(
                f,
                "information matrix is singular (condition estimate {condition:.3e}); \
                 standard errors refused"
            ),
            CoreError::LineSearchFailed => {
                write!(f, "line search failed after steepest-descent restart")
            }
            CoreError::EmptyBasisRow { voxel } => write!(
                f,
                "voxel {voxel} lost all basis support after pruning; \
                 lower the support threshold or coarsen the knot spacing"
            ),
            CoreError::OutsideKnotSpan { point, lo, hi } => {
                write!(f, "point {point} outside knot range [{lo}, {hi})")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CoreError {}

pub(crate) fn invalid(msg: impl core::fmt::Display) -> CoreError {
    CoreError::Invalid(alloc::format!("{msg}"))
}
