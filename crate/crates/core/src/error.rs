//! Error taxonomy shared across the crate.
//!
//! Numerical routines never hand back NaN as a sentinel; every failure mode
//! is a typed variant so callers can tell configuration mistakes apart from
//! genuine numerical breakdown.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Operand shapes are incompatible.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Symmetric input expected.
    #[error("matrix not symmetric: max |S - S'| entry {max_asym:.3e} exceeds tolerance {tol:.1e}")]
    NotSymmetric { max_asym: f64, tol: f64 },

    /// Cholesky pivot failure.
    #[error("matrix not positive definite: pivot {pivot:.6e} at index {index}")]
    NotPositiveDefinite { pivot: f64, index: usize },

    /// A matrix that must be invertible is numerically singular.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// A design or basis matrix does not have full column rank.
    #[error("rank deficient: {0}")]
    RankDeficient(String),

    /// Adaptive quadrature exhausted its subdivision budget.
    #[error("quadrature did not converge: {0}")]
    NonConvergence(String),

    /// The integral (or an expanding-domain diagnostic) grows without bound.
    #[error("divergent integral: {0}")]
    Divergence(String),

    /// Point lies in the excluded null set of the model domain.
    #[error("point excluded from the model domain: {0}")]
    ExcludedPoint(String),

    /// Rejection sampler acceptance collapsed; almost always a configuration error.
    #[error("rejection sampler stalled: acceptance rate {rate:.3e} below {floor:.0e}")]
    SamplerStall { rate: f64, floor: f64 },

    /// A proposal beat the rejection envelope; the envelope estimate is invalid.
    #[error("rejection envelope violated: density/envelope ratio {ratio:.6} at a proposal")]
    EnvelopeViolation { ratio: f64 },

    /// Excluded-point resamples exceeded the documented budget of 0.1%.
    #[error("excluded-point resample rate {rate:.3e} exceeds 1e-3")]
    ResampleBudget { rate: f64 },

    /// Invalid user-facing parameter.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A statistic registered as invariant changed under a group action.
    #[error("invariance violation: {0}")]
    InvarianceViolation(String),

    /// Integrability precheck for the nuisance marginal failed.
    #[error("integrability check failed: {0}")]
    NotIntegrable(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad inputs rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::DimensionMismatch(_)
                | Error::InvalidParameter(_)
                | Error::NotSymmetric { .. }
        )
    }
}
