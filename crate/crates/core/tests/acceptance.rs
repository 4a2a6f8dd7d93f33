//! Acceptance suite. Each test covers one criterion and prints a PASS line
//! (run with `--nocapture` to see them; a failing test prints its FAIL
//! detail through the panic message).

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ringloc_core::camera::{back_project, project, CameraIntrinsics};
use ringloc_core::cloud::{make_ring_template, make_ring_template_shell, PointCloud};
use ringloc_core::detect::fit_circle_lsq;
use ringloc_core::eval::repeatability;
use ringloc_core::fourier::{band_pass_filter, band_pass_response, enhance, fft_forward, fft_inverse_real};
use ringloc_core::geom::{Point3, RigidTransform};
use ringloc_core::mask::{crop_depth, Mask};
use ringloc_core::pipeline::{run_baseline, run_refined, PipelineConfig};
use ringloc_core::raster::{bilinear_sample, sobel_magnitude, DepthImage, GrayImage};
use ringloc_core::refine::{
    cone_residual_jacobian, correspondence_residuals, fit_cone, icp_point_to_plane, icp_tukey,
    mad_scale, tukey_rho, tukey_weight,
};
use ringloc_core::ring::RingSpec;
use ringloc_core::simulate::{render, SceneConfig};

/// Reference recognition-run table (multi-modal method, 11 runs) used as a
/// metrics fixture: per-run XYZ in millimeters, as printed in the source
/// summary.
pub const REFERENCE_RUNS: [[f64; 3]; 11] = [
    [57.93445, 1.32185, 360.04922],
    [57.95081, 1.32222, 360.15085],
    [57.93445, 1.32185, 360.04922],
    [57.93445, 1.32185, 360.04922],
    [57.93445, 1.32185, 360.04922],
    [57.53772, 1.14727, 360.06187],
    [57.93445, 1.32185, 360.04922],
    [57.91811, 1.32147, 359.94763],
    [57.87316, 1.23348, 360.35431],
    [57.73445, 1.32185, 360.04922],
    [57.93445, 1.32185, 360.04922],
];

fn pass(name: &str) {
    println!("[{name}] PASS");
}

#[test]
fn ac1_table2_fixture_stds_and_means() {
    let t0 = std::time::Instant::now();
    let rows: Vec<Option<Point3>> = REFERENCE_RUNS
        .iter()
        .map(|r| Some(Point3::new(r[0], r[1], r[2])))
        .collect();
    let report = repeatability(&rows).unwrap();

    // The published summary's standard deviations use the population (n)
    // convention; they reproduce to well below the 1e-4 gate.
    let expected_std = [0.121477809, 0.053937284, 0.097565242];
    for i in 0..3 {
        assert!(
            (report.std_population[i] - expected_std[i]).abs() < 1e-4,
            "std axis {i}: {} vs {}",
            report.std_population[i],
            expected_std[i]
        );
    }
    let expected_mean = [57.838, 1.298, 360.078];
    for i in 1..3 {
        assert!(
            (report.mean[i] - expected_mean[i]).abs() < 1e-3,
            "mean axis {i}: {} vs {}",
            report.mean[i],
            expected_mean[i]
        );
    }
    assert!(t0.elapsed().as_secs_f64() < 1.0);
    pass("AC-1");
}

// The published x column is internally inconsistent: its own eleven rows
// average to 57.87463182 (their population std matches the printed
// 0.121477809 exactly), while the printed summary mean is 57.838 — the two
// cannot both be reproduced from the same data. The assertion is kept as
// stated and stands as a known failure rather than a loosened gate.
#[test]
fn ac1_table2_fixture_x_mean_as_printed() {
    let rows: Vec<Option<Point3>> = REFERENCE_RUNS
        .iter()
        .map(|r| Some(Point3::new(r[0], r[1], r[2])))
        .collect();
    let report = repeatability(&rows).unwrap();
    assert!(
        (report.mean[0] - 57.838).abs() < 1e-3,
        "[AC-1x] FAIL: x mean of the printed rows is {}, the printed summary says 57.838",
        report.mean[0]
    );
}

#[test]
fn ac2_tukey_suite() {
    let t0 = std::time::Instant::now();
    let k = 2.35;
    assert_eq!(tukey_weight(0.0, k).unwrap(), 1.0);
    assert_eq!(tukey_weight(k, k).unwrap(), 0.0);
    assert_eq!(tukey_weight(-k, k).unwrap(), 0.0);
    let mut prev = f64::INFINITY;
    for i in 0..=10_000 {
        let r = k * i as f64 / 10_000.0;
        let w = tukey_weight(r, k).unwrap();
        assert!(w <= prev + 1e-15, "w not nonincreasing at r = {r}");
        prev = w;
    }
    // rho'(r) = r·w(r) against central finite differences.
    let h = 1e-6;
    for i in 1..200 {
        let r = -k + 2.0 * k * i as f64 / 200.0;
        if (r.abs() - k).abs() < 10.0 * h {
            continue;
        }
        let fd = (tukey_rho(r + h, k).unwrap() - tukey_rho(r - h, k).unwrap()) / (2.0 * h);
        let analytic = r * tukey_weight(r, k).unwrap();
        let denom = analytic.abs().max(1e-9);
        assert!(
            (fd - analytic).abs() / denom < 1e-6,
            "rho' mismatch at r = {r}: {fd} vs {analytic}"
        );
    }

    // k → ∞: the reweighted solver degenerates to plain point-to-plane.
    let source = wavy_cloud(28);
    let truth = RigidTransform::rotation_z(0.05)
        .compose(&RigidTransform::translation_xyz(0.7, -0.4, 0.9));
    let target = source.transformed(&truth);
    let plain =
        icp_point_to_plane(&source, &target, &RigidTransform::identity(), 8.0, 80).unwrap();
    let robust = icp_tukey(&source, &target, &RigidTransform::identity(), 1e9, 8.0, 80).unwrap();
    let diff = plain.transform.compose(&robust.transform.inverse());
    assert!(diff.translation_norm() < 1e-9, "{}", diff.translation_norm());
    assert!(diff.rotation_angle() < 1e-9);
    assert!((plain.rms_weighted - robust.rms_weighted).abs() < 1e-9);

    assert!(t0.elapsed().as_secs_f64() < 5.0);
    pass("AC-2");
}

#[test]
fn ac3_cone_fit_oracle() {
    let t0 = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let apex = [
            rng.gen_range(-50.0..50.0),
            rng.gen_range(-50.0..50.0),
            rng.gen_range(300.0..500.0),
        ];
        let theta = rng.gen_range(30.0f64.to_radians()..75.0f64.to_radians());
        let pts: Vec<Point3> = (0..500)
            .map(|_| {
                let rho = rng.gen_range(2.0..15.0);
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                Point3::new(
                    apex[0] + rho * phi.cos(),
                    apex[1] + rho * phi.sin(),
                    apex[2] + rho / theta.tan(),
                )
            })
            .collect();
        let fit = fit_cone(&PointCloud::from_points(pts), None).unwrap();
        let apex_err = ((fit.apex.x - apex[0]).powi(2)
            + (fit.apex.y - apex[1]).powi(2)
            + (fit.apex.z - apex[2]).powi(2))
        .sqrt();
        assert!(apex_err <= 1e-6, "case {case}: apex error {apex_err}");
        assert!(
            (fit.half_angle - theta).abs() <= 1e-8,
            "case {case}: theta error {}",
            (fit.half_angle - theta).abs()
        );
    }

    // Analytic residual Jacobian against central finite differences.
    for _ in 0..200 {
        let params = [
            rng.gen_range(-20.0..20.0),
            rng.gen_range(-20.0..20.0),
            rng.gen_range(300.0..500.0),
            rng.gen_range(0.3..1.2),
        ];
        let p = Point3::new(
            params[0] + rng.gen_range(1.0..12.0),
            params[1] + rng.gen_range(1.0..12.0),
            params[2] + rng.gen_range(3.0..25.0),
        );
        let analytic = cone_residual_jacobian(params, &p);
        for i in 0..4 {
            let h = 1e-6 * params[i].abs().max(1.0);
            let (mut hi, mut lo) = (params, params);
            hi[i] += h;
            lo[i] -= h;
            let r_hi = residual_for(hi, &p);
            let r_lo = residual_for(lo, &p);
            let fd = (r_hi - r_lo) / (2.0 * h);
            let denom = analytic[i].abs().max(1e-6);
            assert!(
                (fd - analytic[i]).abs() / denom < 1e-5,
                "jacobian component {i}: fd {fd} vs analytic {}",
                analytic[i]
            );
        }
    }
    assert!(t0.elapsed().as_secs_f64() < 30.0);
    pass("AC-3");
}

fn residual_for(params: [f64; 4], p: &Point3) -> f64 {
    let rho = ((p.x - params[0]).powi(2) + (p.y - params[1]).powi(2)).sqrt();
    p.z - (params[2] + rho / params[3].tan())
}

#[test]
fn ac4_robust_icp_outlier_suite() {
    let t0 = std::time::Instant::now();
    let template = make_ring_template_shell(&RingSpec::default(), 0.7).unwrap().cloud;
    let mut ok = 0usize;
    let seeds = 50u64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let axis = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize();
        let angle = rng.gen_range(0.0..15.0f64.to_radians());
        let trans = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize()
            * rng.gen_range(0.0..10.0);
        let truth = RigidTransform::from_scaled_axis(axis * angle, trans);

        let mut target = template.transformed(&truth);
        let normals = target.normals.as_mut().unwrap();
        let n = target.points.len();
        let centroid = truth.apply(&Point3::origin());
        for i in 0..n {
            if rng.gen_bool(0.2) {
                target.points[i] = Point3::new(
                    centroid.x + rng.gen_range(-30.0..30.0),
                    centroid.y + rng.gen_range(-30.0..30.0),
                    centroid.z + rng.gen_range(-30.0..30.0),
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
        let robust = icp_tukey(&template, &target, &plain.transform, k, 20.0, 100).unwrap();

        let truth_center = truth.apply(&Point3::origin());
        let plain_err = plain.transform.apply(&Point3::origin()).distance(&truth_center);
        let robust_err = robust
            .transform
            .apply(&Point3::origin())
            .distance(&truth_center);
        if robust_err <= 0.05 && robust_err * 3.0 <= plain_err {
            ok += 1;
        }
    }
    assert!(
        ok as f64 >= 0.95 * seeds as f64,
        "only {ok}/{seeds} seeds met the robust-ICP gates"
    );
    assert!(t0.elapsed().as_secs_f64() < 120.0);
    pass("AC-4");
}

#[test]
fn ac5_end_to_end_repeatability() {
    let t0 = std::time::Instant::now();
    let mut results = Vec::new();
    for seed in 0..20u64 {
        let scene = SceneConfig {
            tilt_deg: 30.0,
            seed,
            ..SceneConfig::default()
        };
        let (gray, depth, _) = render(&scene).unwrap();
        let cfg = PipelineConfig::for_camera(scene.intrinsics, scene.ring);
        let result = run_refined(&format!("f{seed}"), &gray, &depth, &cfg, None);
        results.push(result.success_center());
    }
    let report = repeatability(&results).unwrap();
    assert_eq!(report.n_failures, 0, "refined failures: {}", report.n_failures);
    for axis in 0..3 {
        assert!(
            report.std_sample[axis] <= 0.2,
            "axis {axis} std {} exceeds 0.2 mm",
            report.std_sample[axis]
        );
    }
    assert!(t0.elapsed().as_secs_f64() < 120.0);
    pass("AC-5");
}

#[test]
fn ac6_baseline_vs_refined_improvement() {
    let t0 = std::time::Instant::now();
    let mut baseline_results = Vec::new();
    let mut refined_results = Vec::new();
    for seed in 0..20u64 {
        let scene = SceneConfig {
            tilt_deg: 30.0,
            seed,
            ..SceneConfig::default()
        };
        let (gray, mut depth, truth) = render(&scene).unwrap();
        // 10% of the frames additionally lose the depth pixels under the
        // detected 2D center (targeted mapping-loss injection).
        if seed % 10 == 0 {
            let (cu, cv) = (
                truth.projected_center[0].round() as i64,
                truth.projected_center[1].round() as i64,
            );
            for dy in -3..=3i64 {
                for dx in -3..=3i64 {
                    if dx * dx + dy * dy <= 9 {
                        depth.set((cu + dx) as u32, (cv + dy) as u32, 0.0);
                    }
                }
            }
        }
        let cfg = PipelineConfig::for_camera(scene.intrinsics, scene.ring);
        baseline_results.push(run_baseline(&format!("f{seed}"), &gray, &depth, &cfg).success_center());
        refined_results
            .push(run_refined(&format!("f{seed}"), &gray, &depth, &cfg, None).success_center());
    }
    let baseline = repeatability(&baseline_results).unwrap();
    let refined = repeatability(&refined_results).unwrap();
    assert!(
        baseline.n_failures >= 1,
        "baseline should lose the dropout frames"
    );
    assert_eq!(refined.n_failures, 0, "refined must survive every frame");
    assert!(
        refined.mean_deviation <= baseline.mean_deviation / 3.0,
        "refined {} vs baseline {} mm",
        refined.mean_deviation,
        baseline.mean_deviation
    );
    assert!(t0.elapsed().as_secs_f64() < 180.0);
    pass("AC-6");
}

#[test]
fn ac7_fft_enhancement_suite() {
    let t0 = std::time::Instant::now();
    let scene = SceneConfig::default();
    let (gray, _, truth) = render(&scene).unwrap();

    // Round trip.
    let back = fft_inverse_real(&fft_forward(&gray));
    let max_err = back
        .iter()
        .zip(gray.data())
        .map(|(a, &b)| (a - b as f64).abs())
        .fold(0.0, f64::max);
    assert!(max_err <= 1e-6, "round trip error {max_err}");

    // DC rejection of the band-pass response.
    let resp = band_pass_response(&gray, 3.0, 15.0).unwrap();
    let mean = resp.iter().sum::<f64>() / resp.len() as f64;
    assert!(mean.abs() <= 1e-6, "response mean {mean}");

    // Exactly zero gain at the DC bin.
    let filt = band_pass_filter(3.0, 15.0, gray.width(), gray.height()).unwrap();
    let dc = filt.data
        [(gray.height() / 2) as usize * gray.width() as usize + (gray.width() / 2) as usize];
    assert_eq!(dc, 0.0);

    // Ring-edge gradient energy at least doubles after enhancement.
    let enhanced = enhance(&gray);
    let ratio = edge_gradient_ratio(&gray, &enhanced, &truth.projected_center, truth.projected_outer_radius);
    assert!(ratio >= 2.0, "edge gradient ratio {ratio}");

    assert!(t0.elapsed().as_secs_f64() < 10.0);
    pass("AC-7");
}

/// Mean Sobel magnitude across the ring boundary (max over a small radial
/// probe at each of 360 angles), after normalizing each image to zero mean
/// and unit variance; returns enhanced/input.
fn edge_gradient_ratio(
    input: &GrayImage,
    enhanced: &GrayImage,
    center: &[f64; 2],
    radius: f64,
) -> f64 {
    let measure = |img: &GrayImage| -> f64 {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img.to_f64();
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-12);
        let normalized: Vec<f64> = data.iter().map(|v| (v - mean) / std).collect();
        let grad = sobel_magnitude(&normalized, w, h);
        let mut acc = 0.0;
        for i in 0..360 {
            let a = std::f64::consts::TAU * i as f64 / 360.0;
            let mut best: f64 = 0.0;
            for probe in -2..=2 {
                let r = radius + probe as f64;
                let x = center[0] + r * a.cos();
                let y = center[1] + r * a.sin();
                best = best.max(bilinear_sample(&grad, w, h, x, y));
            }
            acc += best;
        }
        acc / 360.0
    };
    measure(enhanced) / measure(input)
}

#[test]
fn ac8_geometry_micro_suite() {
    let t0 = std::time::Instant::now();

    // Circle LSQ: exact recovery and the hand-solved 3-point circumcircle.
    let pts: Vec<(f64, f64)> = (0..64)
        .map(|i| {
            let a = i as f64 / 64.0 * std::f64::consts::TAU;
            (-3.0 + 7.5 * a.cos(), 11.0 + 7.5 * a.sin())
        })
        .collect();
    let fit = fit_circle_lsq(&pts).unwrap();
    assert!((fit.xc + 3.0).abs() < 1e-9 && (fit.yc - 11.0).abs() < 1e-9);
    assert!((fit.r - 7.5).abs() < 1e-9 && fit.rms < 1e-9);
    let tri = fit_circle_lsq(&[(0.0, 0.0), (2.0, 0.0), (1.0, 1.0)]).unwrap();
    assert!((tri.xc - 1.0).abs() < 1e-12 && tri.yc.abs() < 1e-12 && (tri.r - 1.0).abs() < 1e-12);

    // Back-projection: linearity in depth and reprojection identity.
    let intr = CameraIntrinsics {
        fx: 580.0,
        fy: 575.0,
        cx: 321.5,
        cy: 239.5,
        width: 640,
        height: 480,
    };
    let p1 = back_project(123.0, 456.0, 250.0, &intr).unwrap();
    let p2 = back_project(123.0, 456.0, 500.0, &intr).unwrap();
    assert!((p2.x - 2.0 * p1.x).abs() < 1e-9 && (p2.y - 2.0 * p1.y).abs() < 1e-9);
    let (u, v) = project(&p1, &intr).unwrap();
    assert!((u - 123.0).abs() < 1e-9 && (v - 456.0).abs() < 1e-9);

    // Mask-crop survivor identity.
    let mut depth = DepthImage::zeros(16, 16);
    for y in 0..16 {
        for x in 0..16 {
            if (x * 7 + y * 3) % 5 != 0 {
                depth.set(x, y, 350.0);
            }
        }
    }
    let mut mask = Mask::zeros(16, 16);
    for y in 3..12 {
        for x in 5..14 {
            mask.set(x, y, 1);
        }
    }
    let invalid_inside = (0..16u32)
        .flat_map(|y| (0..16u32).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.get(x, y) == 1 && depth.get(x, y) == 0.0)
        .count();
    let (_, survivors) = crop_depth(&depth, &mask).unwrap();
    assert_eq!(survivors.len(), mask.count_ones() - invalid_inside);

    // Template radii bounds.
    let template = make_ring_template(&RingSpec::default(), 0.5).unwrap();
    for p in &template.cloud.points {
        let r = (p.x * p.x + p.y * p.y).sqrt();
        assert!((5.0..=12.0).contains(&r), "template radius {r}");
    }

    assert!(t0.elapsed().as_secs_f64() < 5.0);
    pass("AC-8");
}

/// Asymmetric wavy surface with analytic normals (no gauge freedom).
fn wavy_cloud(n_side: usize) -> PointCloud {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for i in 0..n_side {
        for j in 0..n_side {
            let x = -14.0 + 28.0 * i as f64 / (n_side - 1) as f64;
            let y = -14.0 + 28.0 * j as f64 / (n_side - 1) as f64;
            let z = 1.8 * (0.31 * x).sin() + 1.2 * (0.27 * y + 0.7).cos();
            let dzdx = 1.8 * 0.31 * (0.31 * x).cos();
            let dzdy = -1.2 * 0.27 * (0.27 * y + 0.7).sin();
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
