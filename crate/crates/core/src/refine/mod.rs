//! Marker localization: cone fitting plus Tukey-robust point-to-plane ICP
//! against the ideal ring template, composed as a progressive procedure
//! with residual exit gates.

mod cone;
mod icp;
mod nn;
mod tukey;

pub use cone::{
    cone_residual, cone_residual_jacobian, default_cone_init, fit_cone, ConeFit, THETA_MIN,
};
pub use icp::{
    correspondence_residuals, icp_point_to_plane, icp_tukey, mad_scale, RobustIcpResult,
    RMS_DELTA_TOL,
};
pub use tukey::{tukey_rho, tukey_weight};

use nalgebra::Vector3;
use serde::Serialize;

use crate::cloud::{estimate_normals, plane_fit, PointCloud, RingTemplate};
use crate::geom::{Point3, RigidTransform};
use crate::{Error, Result};

/// Tukey scale policy for the robust registration stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TukeyK {
    /// `factor · 1.4826 · MAD` of the point-to-plane residuals after the
    /// coarse alignment, floored at `floor_mm`. 4.685 is the classical
    /// 95%-efficiency constant.
    MadScaled { factor: f64, floor_mm: f64 },
    Fixed(f64),
}

/// Residual gates and registration parameters for [`locate_marker`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LocateGates {
    pub cone_rms_max_mm: f64,
    pub icp_rms_max_mm: f64,
    pub tukey_k: TukeyK,
    pub max_corr_dist_mm: f64,
    pub max_iterations: usize,
}

impl Default for LocateGates {
    fn default() -> Self {
        Self {
            cone_rms_max_mm: 1.0,
            icp_rms_max_mm: 0.5,
            tukey_k: TukeyK::MadScaled {
                factor: 4.685,
                floor_mm: 1e-3,
            },
            // Half the marker's outer radius.
            max_corr_dist_mm: 6.0,
            max_iterations: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    Accepted,
    RejectedCone,
    RejectedIcp,
}

/// Localized marker. `center` is the registered template centroid in the
/// camera frame; `cone.apex` is reported alongside (also camera frame).
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct MarkerPose {
    pub center: Point3,
    /// Unit marker-plane normal, oriented toward the camera.
    pub normal: [f64; 3],
    pub cone: ConeFit,
    pub icp: Option<RobustIcpResult>,
    pub quality: Quality,
}

impl MarkerPose {
    pub fn accepted(&self) -> bool {
        self.quality == Quality::Accepted
    }
}

/// Progressive localization with exit gates.
///
/// Stage A pre-aligns the cloud so its fitted plane normal becomes +z
/// (the cone model assumes a z-aligned axis; real markers tilt). Stage B
/// fits the cone and gates on its rms. Stage C places the template at the
/// cone apex on the fitted plane, runs point-to-plane ICP from identity in
/// template-local coordinates, then the Tukey-reweighted variant, and gates
/// on the weighted rms. Gate failures return a rejected pose, not an error.
pub fn locate_marker(
    roi_cloud: &PointCloud,
    template: &RingTemplate,
    gates: &LocateGates,
) -> Result<MarkerPose> {
    if roi_cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }

    // Stage A: rotate the cloud about its centroid so the plane normal
    // (toward the camera) maps to +z. The marker face then sits above its
    // surroundings and the cone opens upward.
    let (centroid, normal, _plane_rms) = plane_fit(&roi_cloud.points)?;
    let align = RigidTransform::rotation_between(
        &Vector3::new(normal[0], normal[1], normal[2]),
        &Vector3::z(),
    );
    let c_vec = centroid.to_vector();
    let aligned_points: Vec<Point3> = roi_cloud
        .points
        .iter()
        .map(|p| Point3::from_vector(align.rotate_vector(&(p.to_vector() - c_vec))))
        .collect();
    let to_camera = |p: &Point3| -> Point3 {
        Point3::from_vector(align.inverse().rotate_vector(&p.to_vector()) + c_vec)
    };

    // Normals for the scene cloud: rotate the provided ones, or estimate.
    let aligned_normals: Vec<[f64; 3]> = match &roi_cloud.normals {
        Some(ns) => ns
            .iter()
            .map(|n| {
                let r = align.rotate_vector(&Vector3::new(n[0], n[1], n[2]));
                [r.x, r.y, r.z]
            })
            .collect(),
        None => {
            let k = 20.min(roi_cloud.len().saturating_sub(1));
            if k < 3 {
                return Err(Error::InvalidArgument(
                    "cloud too small for normal estimation".into(),
                ));
            }
            let with = estimate_normals(roi_cloud, k)?;
            let ns = with.normals.expect("estimated");
            ns.iter()
                .map(|n| {
                    let r = align.rotate_vector(&Vector3::new(n[0], n[1], n[2]));
                    [r.x, r.y, r.z]
                })
                .collect()
        }
    };
    let aligned = PointCloud {
        points: aligned_points,
        normals: Some(aligned_normals),
    };

    // Stage B: cone fit. A coplanar cloud (no visible relief) degenerates;
    // its last iterate still carries a valid apex estimate and a tiny rms,
    // so localization proceeds on it.
    let cone_fit = match fit_cone(&aligned, None) {
        Ok(fit) => fit,
        Err(Error::DegenerateCone { last }) | Err(Error::ConeNoConvergence { last }) => last,
        Err(e) => return Err(e),
    };
    let cone_camera = ConeFit {
        apex: to_camera(&cone_fit.apex),
        ..cone_fit
    };
    if !(cone_fit.rms <= gates.cone_rms_max_mm) {
        return Ok(MarkerPose {
            center: cone_camera.apex,
            normal,
            cone: cone_camera,
            icp: None,
            quality: Quality::RejectedCone,
        });
    }

    // Stage C: seed the template at the cone apex projected onto the fitted
    // plane (z = 0 in the aligned frame) and register. The ICP itself starts
    // from identity in these template-local coordinates.
    let seed = Vector3::new(cone_fit.apex.x, cone_fit.apex.y, 0.0);
    let shifted_template = PointCloud {
        points: template
            .cloud
            .points
            .iter()
            .map(|p| Point3::from_vector(p.to_vector() + seed))
            .collect(),
        normals: template.cloud.normals.clone(),
    };

    let coarse = icp_point_to_plane(
        &shifted_template,
        &aligned,
        &RigidTransform::identity(),
        gates.max_corr_dist_mm,
        gates.max_iterations,
    )?;
    if !coarse.converged {
        return Ok(MarkerPose {
            center: cone_camera.apex,
            normal,
            cone: cone_camera,
            icp: Some(coarse),
            quality: Quality::RejectedIcp,
        });
    }

    let k = match gates.tukey_k {
        TukeyK::Fixed(k) => k,
        TukeyK::MadScaled { factor, floor_mm } => {
            let residuals = correspondence_residuals(
                &shifted_template,
                &aligned,
                &coarse.transform,
                gates.max_corr_dist_mm,
            );
            mad_scale(&residuals, factor, floor_mm)
        }
    };
    let robust = icp_tukey(
        &shifted_template,
        &aligned,
        &coarse.transform,
        k,
        gates.max_corr_dist_mm,
        gates.max_iterations,
    )?;

    if !robust.converged || !(robust.rms_weighted <= gates.icp_rms_max_mm) {
        return Ok(MarkerPose {
            center: cone_camera.apex,
            normal,
            cone: cone_camera,
            icp: Some(robust),
            quality: Quality::RejectedIcp,
        });
    }

    // Registered template centroid and axis, mapped back to camera frame.
    let center_aligned = Point3::from_vector(robust.transform.apply_vector(&seed));
    let center = to_camera(&center_aligned);
    let axis_aligned = robust.transform.rotate_vector(&Vector3::z());
    let mut axis_camera = align.inverse().rotate_vector(&axis_aligned).normalize();
    if axis_camera.dot(&(-center.to_vector())) < 0.0 {
        axis_camera = -axis_camera;
    }

    Ok(MarkerPose {
        center,
        normal: [axis_camera.x, axis_camera.y, axis_camera.z],
        cone: cone_camera,
        icp: Some(robust),
        quality: Quality::Accepted,
    })
}
