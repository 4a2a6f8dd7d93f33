//! Localization of a small annular fiducial marker (24 mm outer / 10 mm inner
//! diameter ring) from paired grayscale + depth images.
//!
//! The refined pipeline runs:
//!
//! 1. **fourier** – frequency-domain difference-of-Gaussians band-pass
//!    enhancement of the grayscale frame.
//! 2. **detect** – classical ring detection (threshold, blob analysis,
//!    circularity screening, least-squares circle fit), or ingestion of
//!    externally supplied ROI boxes.
//! 3. **mask** – contour extraction inside the ROI and mask-multiplication
//!    cropping of the depth map.
//! 4. **cloud** – back-projection of the cropped depth pixels into a camera
//!    frame point cloud, normal estimation, ideal ring-template sampling.
//! 5. **refine** – cone fitting plus Tukey-robust point-to-plane ICP against
//!    the template, with residual exit gates.
//!
//! A baseline method (2D circle center mapped through the depth image) lives
//! alongside in [`pipeline`], a synthetic structured-light scene generator in
//! [`simulate`], and repeatability metrics in [`eval`].

pub mod camera;
pub mod cloud;
pub mod detect;
pub mod error;
pub mod eval;
pub mod fourier;
pub mod geom;
pub mod mask;
pub mod pipeline;
pub mod ply;
pub mod raster;
pub mod refine;
pub mod ring;
pub mod simulate;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
