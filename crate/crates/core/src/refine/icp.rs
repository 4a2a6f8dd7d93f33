//! Point-to-plane ICP, plain and Tukey-reweighted.

use nalgebra::{Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::nn::GridIndex;
use super::tukey;
use crate::cloud::PointCloud;
use crate::geom::RigidTransform;
use crate::{Error, Result};

/// Convergence threshold on the change of weighted RMS between iterations.
pub const RMS_DELTA_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustIcpResult {
    /// Source (template) to target (scene) transform.
    #[serde(skip, default = "RigidTransform::identity")]
    pub transform: RigidTransform,
    /// √(Σ w·r² / Σ w) over the final correspondence set, mm.
    pub rms_weighted: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Mean Tukey weight over the final correspondences (1.0 for the
    /// unweighted variant).
    pub mean_tukey_weight: f64,
}

#[derive(Clone, Copy)]
enum Weighting {
    Uniform,
    Tukey { k: f64 },
}

/// Classic point-to-plane ICP: nearest-neighbor correspondences within
/// `max_corr_dist`, then the small-angle linearization of
/// `Σ (n·(T·s − t))²` per iteration.
pub fn icp_point_to_plane(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidTransform,
    max_corr_dist: f64,
    max_iter: usize,
) -> Result<RobustIcpResult> {
    icp_core(source, target, init, Weighting::Uniform, max_corr_dist, max_iter)
}

/// Iteratively reweighted point-to-plane ICP: correspondence `i` carries
/// the Tukey weight of its current residual at scale `k`.
pub fn icp_tukey(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidTransform,
    k: f64,
    max_corr_dist: f64,
    max_iter: usize,
) -> Result<RobustIcpResult> {
    if k <= 0.0 {
        return Err(Error::InvalidArgument("tukey k must be > 0".into()));
    }
    icp_core(source, target, init, Weighting::Tukey { k }, max_corr_dist, max_iter)
}

fn icp_core(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidTransform,
    weighting: Weighting,
    max_corr_dist: f64,
    max_iter: usize,
) -> Result<RobustIcpResult> {
    if max_corr_dist <= 0.0 {
        return Err(Error::InvalidArgument("max_corr_dist must be > 0".into()));
    }
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    source.validate_normals()?;
    target.validate_normals()?;
    let (Some(_), Some(target_normals)) = (&source.normals, &target.normals) else {
        return Err(Error::InvalidArgument(
            "point-to-plane ICP needs normals on both clouds".into(),
        ));
    };
    let normals: Vec<Vector3<f64>> = target_normals
        .iter()
        .map(|n| Vector3::new(n[0], n[1], n[2]))
        .collect();
    let target_pts: Vec<Vector3<f64>> = target.points.iter().map(|p| p.to_vector()).collect();
    let source_pts: Vec<Vector3<f64>> = source.points.iter().map(|p| p.to_vector()).collect();
    let index = GridIndex::build(&target.points, max_corr_dist);

    let mut transform = *init;
    let mut prev_rms = f64::INFINITY;
    let mut rms = f64::INFINITY;
    let mut mean_weight = 0.0;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=max_iter {
        iterations = iter;
        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        let mut sum_w = 0.0;
        let mut sum_wr2 = 0.0;
        let mut count = 0usize;

        for sp in &source_pts {
            let moved = transform.rotate_vector(sp) + transform.translation();
            let Some((j, _)) = index.nearest_within(&moved, max_corr_dist) else {
                continue;
            };
            let n = normals[j];
            let r = n.dot(&(moved - target_pts[j]));
            let w = match weighting {
                Weighting::Uniform => 1.0,
                Weighting::Tukey { k } => tukey::weight(r, k),
            };
            let c = moved.cross(&n);
            let a = Vector6::new(c.x, c.y, c.z, n.x, n.y, n.z);
            h += w * a * a.transpose();
            g += w * r * a;
            sum_w += w;
            sum_wr2 += w * r * r;
            count += 1;
        }

        if count == 0 || sum_w <= 0.0 {
            return Ok(RobustIcpResult {
                transform,
                rms_weighted: if rms.is_finite() { rms } else { f64::NAN },
                iterations,
                converged: false,
                mean_tukey_weight: if count > 0 { sum_w / count as f64 } else { 0.0 },
            });
        }

        rms = (sum_wr2 / sum_w).sqrt();
        mean_weight = sum_w / count as f64;
        if (prev_rms - rms).abs() < RMS_DELTA_TOL {
            converged = true;
            break;
        }
        prev_rms = rms;

        // Solve H x = −g through SVD; near-zero singular values (the gauge
        // freedoms of degenerate geometry, e.g. in-plane sliding of a flat
        // cloud) receive no update instead of blowing up.
        let svd = nalgebra::SVD::new(h, true, true);
        let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        if sigma_max <= 0.0 {
            converged = true;
            break;
        }
        let x = svd
            .solve(&(-g), 1e-12 * sigma_max)
            .map_err(|e| Error::DegenerateFit(format!("icp normal equations: {e}")))?;
        let delta = RigidTransform::from_scaled_axis(
            Vector3::new(x[0], x[1], x[2]),
            Vector3::new(x[3], x[4], x[5]),
        );
        transform = delta.compose(&transform);
    }

    Ok(RobustIcpResult {
        transform,
        rms_weighted: rms,
        iterations,
        converged,
        mean_tukey_weight: mean_weight,
    })
}

/// Point-to-plane residuals of the correspondences formed at `transform`,
/// used for scale (MAD) estimation.
pub fn correspondence_residuals(
    source: &PointCloud,
    target: &PointCloud,
    transform: &RigidTransform,
    max_corr_dist: f64,
) -> Vec<f64> {
    let Some(target_normals) = &target.normals else {
        return Vec::new();
    };
    let index = GridIndex::build(&target.points, max_corr_dist);
    let mut out = Vec::new();
    for p in &source.points {
        let moved = transform.apply(p).to_vector();
        if let Some((j, _)) = index.nearest_within(&moved, max_corr_dist) {
            let n = target_normals[j];
            let n = Vector3::new(n[0], n[1], n[2]);
            out.push(n.dot(&(moved - target.points[j].to_vector())));
        }
    }
    out
}

/// Robust scale: `factor · 1.4826 · MAD`, floored at `floor`.
pub fn mad_scale(residuals: &[f64], factor: f64, floor: f64) -> f64 {
    if residuals.is_empty() {
        return floor;
    }
    let mut vals: Vec<f64> = residuals.to_vec();
    let mid = vals.len() / 2;
    vals.sort_by(f64::total_cmp);
    let median = vals[mid];
    let mut devs: Vec<f64> = vals.iter().map(|v| (v - median).abs()).collect();
    devs.sort_by(f64::total_cmp);
    let mad = devs[mid];
    (factor * 1.4826 * mad).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{make_ring_template_shell, PointCloud};
    use crate::geom::Point3;
    use crate::ring::RingSpec;
    use rand::{Rng, SeedableRng};

    /// A bumpy, asymmetric synthetic surface patch with analytic normals.
    /// Unlike the ring template it has no rotational symmetry, so a
    /// recovered transform is unique and comparable to ground truth.
    fn bumpy_patch(n_side: usize) -> PointCloud {
        let mut points = Vec::new();
        let mut normals = Vec::new();
        for i in 0..n_side {
            for j in 0..n_side {
                let x = -15.0 + 30.0 * i as f64 / (n_side - 1) as f64;
                let y = -15.0 + 30.0 * j as f64 / (n_side - 1) as f64;
                let z = 2.0 * (0.3 * x).sin() + 1.5 * (0.23 * y + 0.4).cos() + 0.05 * x;
                let dzdx = 0.6 * (0.3 * x).cos() + 0.05;
                let dzdy = -1.5 * 0.23 * (0.23 * y + 0.4).sin();
                let n = Vector3::new(-dzdx, -dzdy, 1.0).normalize();
                points.push(Point3::new(x, y, z));
                normals.push([n.x, n.y, n.z]);
            }
        }
        PointCloud {
            points,
            normals: Some(normals),
        }
    }

    #[test]
    fn identical_clouds_return_identity() {
        let cloud = bumpy_patch(30);
        let res = icp_point_to_plane(&cloud, &cloud, &RigidTransform::identity(), 5.0, 50).unwrap();
        assert!(res.converged);
        assert!(res.transform.rotation_angle() < 1e-9);
        assert!(res.transform.translation_norm() < 1e-9);
        assert!(res.rms_weighted < 1e-9);
    }

    #[test]
    fn recovers_known_transform() {
        let source = bumpy_patch(40);
        let truth = RigidTransform::rotation_z(10.0f64.to_radians())
            .compose(&RigidTransform::translation_xyz(3.0, -2.0, 1.0));
        let target = source.transformed(&truth);
        let res =
            icp_point_to_plane(&source, &target, &RigidTransform::identity(), 8.0, 100).unwrap();
        assert!(res.converged);
        let err = res.transform.compose(&truth.inverse());
        assert!(
            err.translation_norm() < 1e-3,
            "translation error {}",
            err.translation_norm()
        );
        assert!(
            err.rotation_angle() < 1e-4,
            "rotation error {}",
            err.rotation_angle()
        );
    }

    #[test]
    fn disjoint_clouds_diverge() {
        let a = bumpy_patch(10);
        let b = a.transformed(&RigidTransform::translation_xyz(500.0, 0.0, 0.0));
        let res = icp_point_to_plane(&a, &b, &RigidTransform::identity(), 5.0, 20).unwrap();
        assert!(!res.converged);
    }

    #[test]
    fn missing_normals_is_an_error() {
        let plain = PointCloud::from_points(bumpy_patch(8).points);
        assert!(icp_point_to_plane(&plain, &plain, &RigidTransform::identity(), 5.0, 5).is_err());
    }

    #[test]
    fn clean_tukey_run_has_unit_weights() {
        let cloud = bumpy_patch(25);
        let res =
            icp_tukey(&cloud, &cloud, &RigidTransform::identity(), 1.0, 5.0, 50).unwrap();
        assert!(res.converged);
        assert!(res.mean_tukey_weight >= 0.99);
        assert!(res.transform.rotation_angle() < 1e-9);
    }

    #[test]
    fn huge_k_matches_point_to_plane() {
        let source = bumpy_patch(30);
        let truth = RigidTransform::rotation_z(0.06)
            .compose(&RigidTransform::translation_xyz(0.8, 0.4, -0.6));
        let target = source.transformed(&truth);
        let plain =
            icp_point_to_plane(&source, &target, &RigidTransform::identity(), 8.0, 60).unwrap();
        let robust =
            icp_tukey(&source, &target, &RigidTransform::identity(), 1e9, 8.0, 60).unwrap();
        let diff = plain
            .transform
            .compose(&robust.transform.inverse());
        assert!(diff.translation_norm() < 1e-9);
        assert!(diff.rotation_angle() < 1e-9);
        assert!((plain.rms_weighted - robust.rms_weighted).abs() < 1e-9);
    }

    #[test]
    fn tukey_shrugs_off_outliers() {
        // Controlled outlier injection: both solvers see the identical
        // input; the robust one must come out at least 3x closer.
        let spec = RingSpec::default();
        let template = make_ring_template_shell(&spec, 0.7).unwrap().cloud;
        let truth = RigidTransform::rotation_x(8.0f64.to_radians())
            .compose(&RigidTransform::rotation_z(5.0f64.to_radians()))
            .compose(&RigidTransform::translation_xyz(2.0, -3.0, 4.0));
        let mut target = template.transformed(&truth);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let n = target.len();
        let normals = target.normals.as_mut().unwrap();
        for i in 0..n {
            if rng.gen_bool(0.2) {
                target.points[i] = Point3::new(
                    rng.gen_range(-30.0..30.0),
                    rng.gen_range(-30.0..30.0),
                    rng.gen_range(-30.0..30.0),
                );
                let v = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
                .normalize();
                normals[i] = [v.x, v.y, v.z];
            }
        }

        let plain =
            icp_point_to_plane(&template, &target, &RigidTransform::identity(), 20.0, 100)
                .unwrap();
        let k = mad_scale(
            &correspondence_residuals(&template, &target, &plain.transform, 20.0),
            4.685,
            1e-3,
        );
        let robust =
            icp_tukey(&template, &target, &plain.transform, k, 20.0, 100).unwrap();

        let center_err = |t: &RigidTransform| {
            t.apply(&Point3::origin())
                .distance(&truth.apply(&Point3::origin()))
        };
        let plain_err = center_err(&plain.transform);
        let robust_err = center_err(&robust.transform);
        assert!(robust_err <= 0.05, "robust center error {robust_err}");
        assert!(
            robust_err * 3.0 <= plain_err,
            "robust {robust_err} vs plain {plain_err}"
        );
    }

    #[test]
    fn mad_scale_floors_and_estimates() {
        assert_eq!(mad_scale(&[], 4.685, 0.5), 0.5);
        assert_eq!(mad_scale(&[0.0, 0.0, 0.0], 4.685, 1e-3), 1e-3);
        let vals: Vec<f64> = (0..101).map(|i| (i as f64 - 50.0) / 50.0).collect();
        let k = mad_scale(&vals, 4.685, 1e-3);
        // MAD of a uniform grid on [-1, 1] is 0.5.
        assert!((k - 4.685 * 1.4826 * 0.5).abs() < 0.05);
    }
}
