//! Crate error type.

use thiserror::Error;

use crate::refine::ConeFit;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Depth value 0 is the invalid/no-return sentinel and cannot be
    /// back-projected.
    #[error("invalid depth: 0 is the no-return sentinel")]
    InvalidDepth,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// Cone fit collapsed onto a plane with the half-angle pinned at its
    /// bound. Carries the last iterate so callers can still use the apex.
    #[error("degenerate cone fit: cloud is coplanar and half-angle is pinned")]
    DegenerateCone { last: ConeFit },

    /// Levenberg-Marquardt ran out of iterations. Carries the last iterate.
    #[error("cone fit did not converge within the iteration budget")]
    ConeNoConvergence { last: ConeFit },

    #[error("no contour found in the region of interest")]
    EmptyContour,

    #[error("contour is not a closed pixel loop")]
    OpenContour,

    #[error("empty point cloud")]
    EmptyCloud,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
