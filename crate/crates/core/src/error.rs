use thiserror::Error;

/// Errors raised by the propagation library.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite classical state at t = {t}")]
    NonFinite { t: f64 },

    #[error("matrix is not in the Siegel space: {0}")]
    NotSiegel(String),

    #[error("matrix is numerically singular (smallest singular value {smallest:.3e})")]
    Singular { smallest: f64 },

    #[error("square-root branch is ambiguous at t = {t} (determinant rotated by {rotation:.3} rad in one refined step)")]
    BranchAmbiguity { t: f64, rotation: f64 },

    #[error("grid is inadequate: truncated mass {truncated:.3e} exceeds {threshold:.1e}")]
    InadequateGrid { truncated: f64, threshold: f64 },

    #[error("phase-space box search exceeded the maximum half-width {max_half_width}")]
    QuadratureRadius { max_half_width: f64 },

    #[error("model is not quadratic: {0}")]
    NotQuadratic(String),

    #[error("model has no kinetic/potential split form")]
    MissingSplitForm,

    #[error("spectral aliasing: momentum tail mass {tail:.3e} above {threshold:.1e}")]
    Aliasing { tail: f64, threshold: f64 },

    #[error("wave packet reached the box boundary: edge mass {edge:.3e} above {threshold:.1e}")]
    BoundaryHit { edge: f64, threshold: f64 },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
