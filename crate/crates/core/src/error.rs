use thiserror::Error;

/// Errors surfaced by the solver suite.
///
/// Numerical breakdown of the Riccati flow is *not* an error: it is recorded
/// in [`crate::riccati::CovPath::breakdown`] so scans can observe it. Errors
/// here are contract violations (bad inputs, mismatched grids) or conditions
/// that make a requested quantity undefined.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{field} must be positive")]
    MustBePositive { field: &'static str },

    #[error("{field} must be nonnegative")]
    MustBeNonnegative { field: &'static str },

    #[error("{field} must be finite")]
    NonFinite { field: &'static str },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("price impact fell below floor {floor:e} at t = {time} (degenerate impact)")]
    DegenerateImpact { time: f64, floor: f64 },

    #[error("frozen filter matrix is not Hurwitz: no stationary gain")]
    NotHurwitz,

    #[error("covariance path has a breakdown at t = {time} ({mode}); quantity undefined past it")]
    BrokenCovPath { time: f64, mode: &'static str },

    #[error("Riccati flow broke down at t = {time} ({mode}) during the equilibrium solve")]
    RiccatiBreakdown { time: f64, mode: &'static str },
}

pub type Result<T> = std::result::Result<T, Error>;
