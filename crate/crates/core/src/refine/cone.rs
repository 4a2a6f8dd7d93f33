//! Least-squares fit of a z-aligned cone to a point cloud.
//!
//! The model: a point on the cone with apex `(x₀, y₀, z₀)` and half-angle θ
//! satisfies `√((x−x₀)² + (y−y₀)²) / (z−z₀) = tan θ`. The residual is taken
//! in z: `r = z − (z₀ + √((x−x₀)² + (y−y₀)²)/tan θ)`, and the fit minimizes
//! Σ r² with a Levenberg-Marquardt schedule over `(x₀, y₀, z₀, θ)`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::cloud::{plane_fit, PointCloud};
use crate::geom::Point3;
use crate::{Error, Result};

/// Guard band keeping θ away from 0 and π/2 where tan θ degenerates.
pub const THETA_MIN: f64 = 1e-3;

const MAX_ITERATIONS: usize = 200;
const STEP_TOL: f64 = 1e-9;

/// Fitted cone. `apex` is in the coordinates of the fitted cloud.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConeFit {
    pub apex: Point3,
    /// Half-angle θ in radians, in (0, π/2).
    pub half_angle: f64,
    /// √(mean squared z-residual) in mm.
    pub rms: f64,
    pub inlier_count: usize,
}

/// z-residual of `p` against cone parameters `(x₀, y₀, z₀, θ)`.
pub fn cone_residual(params: [f64; 4], p: &Point3) -> Result<f64> {
    let theta = params[3];
    if !(theta > THETA_MIN && theta < FRAC_PI_2 - THETA_MIN) {
        return Err(Error::InvalidArgument(format!(
            "half-angle {theta} outside ({THETA_MIN}, {})",
            FRAC_PI_2 - THETA_MIN
        )));
    }
    Ok(residual(params, p))
}

#[inline]
fn residual(params: [f64; 4], p: &Point3) -> f64 {
    let rho = ((p.x - params[0]).powi(2) + (p.y - params[1]).powi(2)).sqrt();
    p.z - (params[2] + rho / params[3].tan())
}

/// Analytic gradient of the residual with respect to `(x₀, y₀, z₀, θ)`.
/// At ρ = 0 the x₀/y₀ derivatives are taken as 0 (the subgradient choice
/// that keeps the normal equations finite).
pub fn cone_residual_jacobian(params: [f64; 4], p: &Point3) -> [f64; 4] {
    let dx = p.x - params[0];
    let dy = p.y - params[1];
    let rho = (dx * dx + dy * dy).sqrt();
    let theta = params[3];
    let cot = 1.0 / theta.tan();
    let (gx, gy) = if rho > 0.0 {
        (dx / rho * cot, dy / rho * cot)
    } else {
        (0.0, 0.0)
    };
    let sin = theta.sin();
    [gx, gy, -1.0, rho / (sin * sin)]
}

fn clamp_theta(mut params: [f64; 4]) -> [f64; 4] {
    params[3] = params[3].clamp(THETA_MIN, FRAC_PI_2 - THETA_MIN);
    params
}

fn cost(params: [f64; 4], points: &[Point3]) -> f64 {
    points.iter().map(|p| residual(params, p).powi(2)).sum()
}

/// Default initialization: apex xy at the cloud centroid, z₀ one millimeter
/// below the lowest point, θ = 60°.
pub fn default_cone_init(points: &[Point3]) -> [f64; 4] {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let my = points.iter().map(|p| p.y).sum::<f64>() / n;
    let min_z = points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    [mx, my, min_z - 1.0, 60.0f64.to_radians()]
}

/// Nonlinear least-squares cone fit. Converges when the accepted parameter
/// step drops below 1e-9 (or no descent direction remains), within 200
/// iterations. A coplanar cloud with θ pinned at its bound is reported as
/// [`Error::DegenerateCone`], carrying the last iterate.
pub fn fit_cone(cloud: &PointCloud, init: Option<[f64; 4]>) -> Result<ConeFit> {
    let points = &cloud.points;
    if points.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "cone fit needs >= 10 points, got {}",
            points.len()
        )));
    }
    let mut params = clamp_theta(init.unwrap_or_else(|| default_cone_init(points)));
    let mut current_cost = cost(params, points);
    let mut lambda = 1e-3;
    let mut converged = false;

    for _ in 0..MAX_ITERATIONS {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for p in points {
            let r = residual(params, p);
            let j = cone_residual_jacobian(params, p);
            let jv = Vector4::new(j[0], j[1], j[2], j[3]);
            jtj += jv * jv.transpose();
            jtr += jv * r;
        }

        let mut accepted = false;
        for _ in 0..30 {
            let mut damped = jtj;
            for i in 0..4 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            if let Some(delta) = damped.lu().solve(&(-jtr)) {
                let candidate = clamp_theta([
                    params[0] + delta[0],
                    params[1] + delta[1],
                    params[2] + delta[2],
                    params[3] + delta[3],
                ]);
                let candidate_cost = cost(candidate, points);
                if candidate_cost < current_cost {
                    let step = ((candidate[0] - params[0]).powi(2)
                        + (candidate[1] - params[1]).powi(2)
                        + (candidate[2] - params[2]).powi(2)
                        + (candidate[3] - params[3]).powi(2))
                    .sqrt();
                    params = candidate;
                    current_cost = candidate_cost;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if step < STEP_TOL {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
            if lambda > 1e14 {
                break;
            }
        }
        if !accepted {
            // No descent direction at any damping: at a (local) minimum.
            converged = true;
        }
        if converged {
            break;
        }
    }

    let fit = ConeFit {
        apex: Point3::new(params[0], params[1], params[2]),
        half_angle: params[3],
        rms: (current_cost / points.len() as f64).sqrt(),
        inlier_count: points.len(),
    };
    if !converged {
        return Err(Error::ConeNoConvergence { last: fit });
    }
    let pinned = params[3] <= THETA_MIN + 1e-9 || params[3] >= FRAC_PI_2 - THETA_MIN - 1e-9;
    if pinned {
        if let Ok((_, _, plane_rms)) = plane_fit(points) {
            if plane_rms < 1e-3 {
                return Err(Error::DegenerateCone { last: fit });
            }
        }
    }
    Ok(fit)
}
