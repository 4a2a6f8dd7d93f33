//! 3D points and rigid transforms in the camera frame.
//!
//! Camera frame convention: +z along the optical axis into the scene,
//! +x right, +y down (consistent with image raster order). All lengths
//! are millimeters.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A 3D point in the camera frame, in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }
}

/// Tolerance for the rotation-matrix invariants (orthonormality, det = +1).
pub const ROTATION_TOL: f64 = 1e-9;

/// A rigid transform: `p' = R p + t` with `R` a proper rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, validating `RᵀR = I ± 1e-9` and `det(R) = +1 ± 1e-9`.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho_err = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if ortho_err > ROTATION_TOL * 10.0 {
            return Err(Error::InvalidArgument(format!(
                "rotation is not orthonormal (|RtR - I| = {ortho_err:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOL * 10.0 {
            return Err(Error::InvalidArgument(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation_x(angle_rad: f64) -> Self {
        Self::from_parts_unchecked(
            Rotation3::from_axis_angle(&Vector3::x_axis(), angle_rad).into_inner(),
            Vector3::zeros(),
        )
    }

    pub fn rotation_z(angle_rad: f64) -> Self {
        Self::from_parts_unchecked(
            Rotation3::from_axis_angle(&Vector3::z_axis(), angle_rad).into_inner(),
            Vector3::zeros(),
        )
    }

    pub fn translation_xyz(x: f64, y: f64, z: f64) -> Self {
        Self::from_parts_unchecked(Matrix3::identity(), Vector3::new(x, y, z))
    }

    /// Rotation from an axis-angle vector (angle = |w|, axis = w/|w|).
    pub fn from_scaled_axis(w: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self::from_parts_unchecked(Rotation3::from_scaled_axis(w).into_inner(), translation)
    }

    /// The shortest rotation mapping `from` onto `to` (both need not be unit).
    pub fn rotation_between(from: &Vector3<f64>, to: &Vector3<f64>) -> Self {
        let rot = Rotation3::rotation_between(from, to)
            .unwrap_or_else(|| {
                // Antiparallel input: rotate half a turn about any axis
                // perpendicular to `from`.
                let axis = perpendicular(from);
                Rotation3::from_axis_angle(&Unit::new_normalize(axis), std::f64::consts::PI)
            });
        Self::from_parts_unchecked(rot.into_inner(), Vector3::zeros())
    }

    /// Composition: `(a ∘ b)(p) = a(b(p))`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rot_inv = self.rotation.transpose();
        Self {
            rotation: rot_inv,
            translation: -(rot_inv * self.translation),
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from_vector(self.rotation * p.to_vector() + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v + self.translation
    }

    /// Rotates a direction (no translation).
    pub fn rotate_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Rotation angle in radians, in [0, π].
    pub fn rotation_angle(&self) -> f64 {
        let trace = self.rotation.trace();
        ((trace - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    pub fn translation_norm(&self) -> f64 {
        self.translation.norm()
    }
}

fn perpendicular(v: &Vector3<f64>) -> Vector3<f64> {
    let candidate = if v.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    v.cross(&candidate)
}

/// Composes a pair of transforms; free-function form of [`RigidTransform::compose`].
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}
