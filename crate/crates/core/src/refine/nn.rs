//! Uniform-grid spatial index for exact radius-bounded nearest neighbors.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::geom::Point3;

/// Hash grid with cell edge equal to the query radius: any point within
/// `radius` of a query lies in the 3x3x3 cell neighborhood, so lookups are
/// exact, not approximate.
pub struct GridIndex {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
    points: Vec<Vector3<f64>>,
}

impl GridIndex {
    pub fn build(points: &[Point3], cell: f64) -> Self {
        assert!(cell > 0.0);
        let pts: Vec<Vector3<f64>> = points.iter().map(|p| p.to_vector()).collect();
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in pts.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i as u32);
        }
        Self {
            cell,
            cells,
            points: pts,
        }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    /// Index and distance of the nearest point within `radius` of `q`,
    /// if any. `radius` must not exceed the cell edge.
    pub fn nearest_within(&self, q: &Vector3<f64>, radius: f64) -> Option<(usize, f64)> {
        debug_assert!(radius <= self.cell * (1.0 + 1e-12));
        let (kx, ky, kz) = Self::key(q, self.cell);
        let mut best: Option<(usize, f64)> = None;
        let r2 = radius * radius;
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(bucket) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) {
                        for &i in bucket {
                            let d2 = (self.points[i as usize] - q).norm_squared();
                            if d2 <= r2 && best.map_or(true, |(_, b)| d2 < b) {
                                best = Some((i as usize, d2));
                            }
                        }
                    }
                }
            }
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }
}
