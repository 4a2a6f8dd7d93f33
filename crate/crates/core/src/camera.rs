//! Pinhole camera model and back-projection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::Point3;
use crate::{Error, Result};

/// Pinhole intrinsics. Focal lengths and principal point are in pixels;
/// `width`/`height` bind the model to an image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidArgument("focal lengths must be > 0".into()));
        }
        if !(self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64)
        {
            return Err(Error::InvalidArgument(
                "principal point must lie inside the image".into(),
            ));
        }
        Ok(())
    }

    /// Reads intrinsics from a TOML document with fields
    /// `fx, fy, cx, cy, width, height`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let parsed: CameraIntrinsics =
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        parsed.validate()?;
        Ok(parsed)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

/// Back-projects pixel `(u, v)` at `depth` (mm) into the camera frame:
/// `x = (u − cx)·z/fx`, `y = (v − cy)·z/fy`, `z = depth`.
pub fn back_project(u: f64, v: f64, depth: f64, intr: &CameraIntrinsics) -> Result<Point3> {
    if !(u.is_finite() && v.is_finite() && depth.is_finite()) {
        return Err(Error::InvalidArgument("non-finite back-projection input".into()));
    }
    if depth == 0.0 {
        return Err(Error::InvalidDepth);
    }
    if depth < 0.0 {
        return Err(Error::InvalidArgument("depth must be positive".into()));
    }
    intr.validate()?;
    Ok(Point3::new(
        (u - intr.cx) * depth / intr.fx,
        (v - intr.cy) * depth / intr.fy,
        depth,
    ))
}

/// Projects a camera-frame point to pixel coordinates.
pub fn project(p: &Point3, intr: &CameraIntrinsics) -> Result<(f64, f64)> {
    if p.z <= 0.0 {
        return Err(Error::InvalidArgument(
            "cannot project a point at or behind the camera".into(),
        ));
    }
    Ok((
        intr.fx * p.x / p.z + intr.cx,
        intr.fy * p.y / p.z + intr.cy,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics {
            fx: 600.0,
            fy: 600.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }

    #[test]
    fn principal_ray_is_optical_axis() {
        let p = back_project(320.0, 240.0, 400.0, &intr()).unwrap();
        assert_eq!(p, Point3::new(0.0, 0.0, 400.0));
    }

    #[test]
    fn one_focal_length_off_axis_gives_x_equal_z() {
        let p = back_project(320.0 + 600.0, 240.0, 400.0, &intr()).unwrap();
        assert!((p.x - 400.0).abs() < 1e-12);
        assert!(p.y.abs() < 1e-12);
    }

    #[test]
    fn hand_computed_off_axis_point() {
        // (u−cx)·z/fx = (100−320)·363.74/580, (v−cy)·z/fy = (50−240)·363.74/580.
        let intr = CameraIntrinsics {
            fx: 580.0,
            fy: 580.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        };
        let p = back_project(100.0, 50.0, 363.74, &intr).unwrap();
        assert!((p.x - (-137.9703448275862)).abs() < 1e-9);
        assert!((p.y - (-119.1562068965517)).abs() < 1e-9);
        assert!((p.z - 363.74).abs() < 1e-12);
    }

    #[test]
    fn zero_depth_is_rejected() {
        assert!(matches!(
            back_project(10.0, 10.0, 0.0, &intr()),
            Err(Error::InvalidDepth)
        ));
        assert!(back_project(f64::NAN, 10.0, 5.0, &intr()).is_err());
    }

    #[test]
    fn linear_in_depth() {
        let a = back_project(100.0, 50.0, 250.0, &intr()).unwrap();
        let b = back_project(100.0, 50.0, 500.0, &intr()).unwrap();
        assert!((b.x - 2.0 * a.x).abs() < 1e-9);
        assert!((b.y - 2.0 * a.y).abs() < 1e-9);
        assert!((b.z - 2.0 * a.z).abs() < 1e-9);
    }

    #[test]
    fn reprojection_recovers_pixel() {
        let intr = intr();
        for &(u, v, d) in &[(13.25, 470.5, 312.0), (320.0, 240.0, 880.0), (639.0, 0.5, 201.3)] {
            let p = back_project(u, v, d, &intr).unwrap();
            let (u2, v2) = project(&p, &intr).unwrap();
            assert!((u2 - u).abs() < 1e-9 && (v2 - v).abs() < 1e-9);
        }
    }

    #[test]
    fn intrinsics_toml_round_trip() {
        let text = "fx = 580.0\nfy = 575.0\ncx = 320.0\ncy = 240.0\nwidth = 640\nheight = 480\n";
        let parsed = CameraIntrinsics::from_toml_str(text).unwrap();
        assert_eq!(parsed.fx, 580.0);
        assert_eq!(parsed.height, 480);
        assert!(CameraIntrinsics::from_toml_str("fx = -1.0").is_err());
    }
}
