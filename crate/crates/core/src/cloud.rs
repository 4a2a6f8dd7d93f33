//! Point clouds: depth back-projection, normal estimation, plane fitting,
//! and ideal ring-template sampling.

use nalgebra::{Matrix3, Vector3};

use crate::camera::{back_project, CameraIntrinsics};
use crate::geom::{Point3, RigidTransform};
use crate::ring::RingSpec;
use crate::{Error, Result};

/// A set of camera-frame points, optionally with per-point unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub normals: Option<Vec<[f64; 3]>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Point3>) -> Self {
        Self {
            points,
            normals: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3 {
        let mut acc = Vector3::zeros();
        for p in &self.points {
            acc += p.to_vector();
        }
        Point3::from_vector(acc / self.points.len().max(1) as f64)
    }

    /// Applies a rigid transform to points and (rotating only) to normals.
    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            normals: self.normals.as_ref().map(|ns| {
                ns.iter()
                    .map(|n| {
                        let r = t.rotate_vector(&Vector3::new(n[0], n[1], n[2]));
                        [r.x, r.y, r.z]
                    })
                    .collect()
            }),
        }
    }

    pub fn validate_normals(&self) -> Result<()> {
        if let Some(ns) = &self.normals {
            if ns.len() != self.points.len() {
                return Err(Error::DimensionMismatch {
                    expected: format!("{} normals", self.points.len()),
                    actual: format!("{}", ns.len()),
                });
            }
            for n in ns {
                let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidArgument(format!(
                        "normal magnitude {norm} deviates from 1"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Back-projects surviving `(u, v, depth)` triples into a point cloud,
/// preserving row-major ordering.
pub fn depth_to_cloud(
    survivors: &[(u32, u32, f64)],
    intr: &CameraIntrinsics,
) -> Result<PointCloud> {
    if survivors.is_empty() {
        return Err(Error::EmptyCloud);
    }
    intr.validate()?;
    let mut points = Vec::with_capacity(survivors.len());
    for &(u, v, d) in survivors {
        points.push(back_project(u as f64, v as f64, d, intr)?);
    }
    Ok(PointCloud::from_points(points))
}

/// Least-squares plane through a point set: returns (centroid, unit normal,
/// rms point-to-plane distance). The normal is oriented toward the camera
/// origin (n·(0 − centroid) ≥ 0).
pub fn plane_fit(points: &[Point3]) -> Result<(Point3, [f64; 3], f64)> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit("plane fit needs >= 3 points".into()));
    }
    let n = points.len() as f64;
    let mut centroid = Vector3::zeros();
    for p in points {
        centroid += p.to_vector();
    }
    centroid /= n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.to_vector() - centroid;
        cov += d * d.transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let (mut min_i, mut min_v) = (0usize, f64::INFINITY);
    for i in 0..3 {
        if eig.eigenvalues[i] < min_v {
            min_v = eig.eigenvalues[i];
            min_i = i;
        }
    }
    let mut normal = eig.eigenvectors.column(min_i).into_owned();
    if normal.dot(&(-centroid)) < 0.0 {
        normal = -normal;
    }
    let normal = normal.normalize();
    let rms = (points
        .iter()
        .map(|p| (p.to_vector() - centroid).dot(&normal).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok((
        Point3::from_vector(centroid),
        [normal.x, normal.y, normal.z],
        rms,
    ))
}

/// Per-point normals from the covariance of the k nearest neighbors
/// (smallest eigenvector), consistently oriented toward the camera origin.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    let n = cloud.len();
    if k < 3 {
        return Err(Error::InvalidArgument("normal estimation needs k >= 3".into()));
    }
    if n <= k {
        return Err(Error::InvalidArgument(format!(
            "cloud of {n} points is too small for k = {k}"
        )));
    }
    let pts: Vec<Vector3<f64>> = cloud.points.iter().map(|p| p.to_vector()).collect();
    let mut normals = Vec::with_capacity(n);
    let mut dist_idx: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        dist_idx.clear();
        for (j, q) in pts.iter().enumerate() {
            if j != i {
                dist_idx.push(((q - pts[i]).norm_squared(), j));
            }
        }
        dist_idx.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0));
        let neighbors = &dist_idx[..k];

        let mut mean = pts[i];
        for &(_, j) in neighbors {
            mean += pts[j];
        }
        mean /= (k + 1) as f64;
        let mut cov = Matrix3::zeros();
        let d0 = pts[i] - mean;
        cov += d0 * d0.transpose();
        for &(_, j) in neighbors {
            let d = pts[j] - mean;
            cov += d * d.transpose();
        }
        let eig = nalgebra::SymmetricEigen::new(cov);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let scale = eig.eigenvalues[order[2]].abs().max(1e-30);
        if eig.eigenvalues[order[1]] / scale < 1e-9 {
            return Err(Error::DegenerateFit(format!(
                "rank-deficient neighborhood at point {i} (collinear points)"
            )));
        }
        let mut normal = eig.eigenvectors.column(order[0]).normalize();
        // Orient toward the camera origin.
        if normal.dot(&(-pts[i])) < 0.0 {
            normal = -normal;
        }
        normals.push([normal.x, normal.y, normal.z]);
    }
    Ok(PointCloud {
        points: cloud.points.clone(),
        normals: Some(normals),
    })
}

/// Ideal sampled marker template. The cloud is centered at the origin with
/// its axis along +z.
#[derive(Debug, Clone)]
pub struct RingTemplate {
    pub cloud: PointCloud,
    pub spec: RingSpec,
    pub sample_spacing_mm: f64,
}

/// Samples the flat annulus face on a polar grid with near-uniform areal
/// density: ring `j` at radius `r_j` carries ~2π·r_j/Δ points. Normals are
/// all +z. The face alone suffices for registration of a top-down view;
/// [`make_ring_template_shell`] adds the side walls.
pub fn make_ring_template(spec: &RingSpec, sample_spacing_mm: f64) -> Result<RingTemplate> {
    build_template(spec, sample_spacing_mm, false)
}

/// Template variant with the 3 mm inner and outer cylindrical walls
/// included (radial normals). The walls break the in-plane translation
/// ambiguity of a purely planar template.
pub fn make_ring_template_shell(spec: &RingSpec, sample_spacing_mm: f64) -> Result<RingTemplate> {
    build_template(spec, sample_spacing_mm, true)
}

fn build_template(spec: &RingSpec, spacing: f64, shell: bool) -> Result<RingTemplate> {
    spec.validate()?;
    let band = spec.outer_radius_mm() - spec.inner_radius_mm();
    if !(spacing > 0.0 && spacing <= band / 4.0) {
        return Err(Error::InvalidArgument(format!(
            "sample spacing {spacing} outside (0, {}]",
            band / 4.0
        )));
    }
    let mut points = Vec::new();
    let mut normals = Vec::new();

    let n_rings = (band / spacing).round().max(1.0) as usize;
    let dr = band / n_rings as f64;
    for j in 0..n_rings {
        let r = spec.inner_radius_mm() + (j as f64 + 0.5) * dr;
        let n_pts = ((std::f64::consts::TAU * r) / spacing).round().max(1.0) as usize;
        for i in 0..n_pts {
            let a = std::f64::consts::TAU * i as f64 / n_pts as f64;
            points.push(Point3::new(r * a.cos(), r * a.sin(), 0.0));
            normals.push([0.0, 0.0, 1.0]);
        }
    }

    if shell {
        let n_levels = (spec.thickness_mm / spacing).round().max(1.0) as usize;
        let dz = spec.thickness_mm / n_levels as f64;
        for &(radius, sign) in &[(spec.outer_radius_mm(), 1.0), (spec.inner_radius_mm(), -1.0)] {
            let n_pts = ((std::f64::consts::TAU * radius) / spacing).round().max(1.0) as usize;
            for level in 0..n_levels {
                let z = -(level as f64 + 0.5) * dz;
                for i in 0..n_pts {
                    let a = std::f64::consts::TAU * i as f64 / n_pts as f64;
                    points.push(Point3::new(radius * a.cos(), radius * a.sin(), z));
                    normals.push([sign * a.cos(), sign * a.sin(), 0.0]);
                }
            }
        }
    }

    // Pin the centroid exactly at the origin (the polar grid is symmetric,
    // so this only removes accumulated rounding).
    let mut c = Vector3::zeros();
    for p in &points {
        c += p.to_vector();
    }
    c /= points.len() as f64;
    for p in &mut points {
        *p = Point3::from_vector(p.to_vector() - c);
    }

    Ok(RingTemplate {
        cloud: PointCloud {
            points,
            normals: Some(normals),
        },
        spec: *spec,
        sample_spacing_mm: spacing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics {
            fx: 580.0,
            fy: 580.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }

    #[test]
    fn single_survivor_maps_to_axis_point() {
        let cloud = depth_to_cloud(&[(320, 240, 400.0)], &intr()).unwrap();
        assert_eq!(cloud.points, vec![Point3::new(0.0, 0.0, 400.0)]);
    }

    #[test]
    fn pixel_spacing_scales_with_depth() {
        // Two survivors one focal length apart in u at equal depth sit one
        // depth apart in x.
        let cloud = depth_to_cloud(&[(320, 240, 400.0), (320 + 580, 240, 400.0)], &intr()).unwrap();
        assert!((cloud.points[1].x - cloud.points[0].x - 400.0).abs() < 1e-9);
    }

    #[test]
    fn empty_survivors_is_an_error() {
        assert!(matches!(
            depth_to_cloud(&[], &intr()),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn count_matches_survivors() {
        let survivors: Vec<(u32, u32, f64)> =
            (0..37).map(|i| (i, i * 2, 300.0 + i as f64)).collect();
        let cloud = depth_to_cloud(&survivors, &intr()).unwrap();
        assert_eq!(cloud.len(), survivors.len());
    }

    #[test]
    fn planar_cloud_has_straight_down_normals() {
        let mut pts = Vec::new();
        for y in -10..=10 {
            for x in -10..=10 {
                pts.push(Point3::new(x as f64, y as f64, 400.0));
            }
        }
        let cloud = estimate_normals(&PointCloud::from_points(pts), 8).unwrap();
        for n in cloud.normals.as_ref().unwrap() {
            assert!((n[0]).abs() < 1e-6 && (n[1]).abs() < 1e-6);
            assert!((n[2] + 1.0).abs() < 1e-6, "normal = {n:?}");
        }
        cloud.validate_normals().unwrap();
    }

    #[test]
    fn sphere_normals_are_radial() {
        // Analytic oracle: the outward normal of a sphere point p (center c)
        // is ±(p−c)/|p−c|; orientation points at the camera.
        let center = Vector3::new(0.0, 0.0, 400.0);
        let mut pts = Vec::new();
        let n_lat = 40;
        for i in 1..n_lat {
            let theta = std::f64::consts::PI * i as f64 / n_lat as f64;
            let n_lon = (80.0 * theta.sin()).ceil().max(1.0) as usize;
            for j in 0..n_lon {
                let phi = std::f64::consts::TAU * j as f64 / n_lon as f64;
                pts.push(Point3::from_vector(
                    center
                        + 50.0
                            * Vector3::new(
                                theta.sin() * phi.cos(),
                                theta.sin() * phi.sin(),
                                theta.cos(),
                            ),
                ));
            }
        }
        let cloud = estimate_normals(&PointCloud::from_points(pts), 20).unwrap();
        let normals = cloud.normals.as_ref().unwrap();
        for (p, n) in cloud.points.iter().zip(normals) {
            let radial = (p.to_vector() - center).normalize();
            let dot = (n[0] * radial.x + n[1] * radial.y + n[2] * radial.z).abs();
            let angle = dot.clamp(-1.0, 1.0).acos().to_degrees();
            assert!(angle <= 2.0, "normal off radial by {angle} deg");
        }
    }

    #[test]
    fn collinear_neighborhood_is_degenerate() {
        let pts = vec![
            Point3::new(0.0, 0.0, 100.0),
            Point3::new(1.0, 0.0, 100.0),
            Point3::new(2.0, 0.0, 100.0),
            Point3::new(3.0, 0.0, 100.0),
        ];
        assert!(estimate_normals(&PointCloud::from_points(pts), 3).is_err());
    }

    #[test]
    fn too_small_cloud_is_an_error() {
        let pts = vec![Point3::new(0.0, 0.0, 1.0); 5];
        assert!(estimate_normals(&PointCloud::from_points(pts), 5).is_err());
    }

    #[test]
    fn template_radii_and_count() {
        let spec = RingSpec::default();
        let t = make_ring_template(&spec, 0.5).unwrap();
        for p in &t.cloud.points {
            let r = (p.x * p.x + p.y * p.y).sqrt();
            assert!((5.0..=12.0).contains(&r), "radius {r} outside annulus");
        }
        // Analytic density oracle: annulus area over cell area.
        let expected = spec.face_area_mm2() / (0.5 * 0.5);
        let got = t.cloud.points.len() as f64;
        assert!(
            (got - expected).abs() / expected < 0.10,
            "count {got} vs {expected}"
        );
        t.cloud.validate_normals().unwrap();
    }

    #[test]
    fn template_centroid_at_origin() {
        let t = make_ring_template(&RingSpec::default(), 0.5).unwrap();
        let c = t.cloud.centroid();
        assert!(c.to_vector().norm() < 1e-9);
    }

    #[test]
    fn template_spacing_bounds() {
        assert!(make_ring_template(&RingSpec::default(), 12.0).is_err());
        assert!(make_ring_template(&RingSpec::default(), 0.0).is_err());
    }

    #[test]
    fn template_invariant_under_z_rotation() {
        let t = make_ring_template(&RingSpec::default(), 0.5).unwrap();
        let rotated = t.cloud.transformed(&RigidTransform::rotation_z(1.234));
        let c = rotated.centroid();
        assert!(c.to_vector().norm() < 1e-9);
        let (_, normal, rms) = plane_fit(&rotated.points).unwrap();
        assert!(rms < 1e-9);
        assert!((normal[2].abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shell_template_has_wall_points() {
        let spec = RingSpec::default();
        let flat = make_ring_template(&spec, 0.5).unwrap();
        let shell = make_ring_template_shell(&spec, 0.5).unwrap();
        assert!(shell.cloud.len() > flat.cloud.len());
        let has_side = shell
            .cloud
            .normals
            .as_ref()
            .unwrap()
            .iter()
            .any(|n| n[2].abs() < 1e-9);
        assert!(has_side);
    }
}
