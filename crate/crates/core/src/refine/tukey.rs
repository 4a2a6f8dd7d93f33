//! Tukey biweight loss and weight.

use crate::{Error, Result};

/// Tukey biweight loss:
/// `ρ(r) = (k²/6)(1 − (1 − (r/k)²)³)` for |r| ≤ k, saturating at `k²/6`.
pub fn tukey_rho(r: f64, k: f64) -> Result<f64> {
    if k <= 0.0 {
        return Err(Error::InvalidArgument("tukey k must be > 0".into()));
    }
    Ok(rho(r, k))
}

/// Tukey biweight weight: `w(r) = (1 − (r/k)²)²` for |r| ≤ k, else 0.
/// Satisfies `ρ'(r) = r·w(r)` on (−k, k).
pub fn tukey_weight(r: f64, k: f64) -> Result<f64> {
    if k <= 0.0 {
        return Err(Error::InvalidArgument("tukey k must be > 0".into()));
    }
    Ok(weight(r, k))
}

#[inline]
pub(crate) fn rho(r: f64, k: f64) -> f64 {
    if r.abs() <= k {
        let u = 1.0 - (r / k) * (r / k);
        k * k / 6.0 * (1.0 - u * u * u)
    } else {
        k * k / 6.0
    }
}

#[inline]
pub(crate) fn weight(r: f64, k: f64) -> f64 {
    if r.abs() <= k {
        let u = 1.0 - (r / k) * (r / k);
        u * u
    } else {
        0.0
    }
}
