//! Marker geometry.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Physical dimensions of the annular marker, in millimeters.
///
/// The default matches the ceramic ring used throughout: 24 mm outer
/// diameter, 10 mm central hole, 3 mm tall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RingSpec {
    pub outer_diameter_mm: f64,
    pub inner_diameter_mm: f64,
    pub thickness_mm: f64,
}

impl Default for RingSpec {
    fn default() -> Self {
        Self {
            outer_diameter_mm: 24.0,
            inner_diameter_mm: 10.0,
            thickness_mm: 3.0,
        }
    }
}

impl RingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner_diameter_mm > 0.0
            && self.inner_diameter_mm < self.outer_diameter_mm
            && self.thickness_mm > 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "invalid ring spec: outer {} / inner {} / thickness {}",
                self.outer_diameter_mm, self.inner_diameter_mm, self.thickness_mm
            )));
        }
        Ok(())
    }

    pub fn outer_radius_mm(&self) -> f64 {
        self.outer_diameter_mm / 2.0
    }

    pub fn inner_radius_mm(&self) -> f64 {
        self.inner_diameter_mm / 2.0
    }

    /// Area of the annulus face in mm².
    pub fn face_area_mm2(&self) -> f64 {
        std::f64::consts::PI
            * (self.outer_radius_mm().powi(2) - self.inner_radius_mm().powi(2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let spec = RingSpec::default();
        spec.validate().unwrap();
        assert_eq!(spec.outer_radius_mm(), 12.0);
        assert_eq!(spec.inner_radius_mm(), 5.0);
    }

    #[test]
    fn rejects_inverted_diameters() {
        let spec = RingSpec {
            outer_diameter_mm: 10.0,
            inner_diameter_mm: 24.0,
            thickness_mm: 3.0,
        };
        assert!(spec.validate().is_err());
    }
}
