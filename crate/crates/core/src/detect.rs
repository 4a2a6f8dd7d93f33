//! Classical 2D ring detection: preprocessing, threshold segmentation,
//! connected components, area/circularity screening, and least-squares
//! circle fitting. Also ingests externally produced ROI boxes.

use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::mask::{contour_perimeter, trace_outer_contour, Mask};
use crate::raster::{gaussian_blur_f64, GrayImage};
use crate::ring::RingSpec;
use crate::{Error, Result};

/// Axis-aligned region of interest with a confidence score in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub score: f64,
}

/// Least-squares circle fit result, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleFit {
    pub xc: f64,
    pub yc: f64,
    pub r: f64,
    /// √(mean (dᵢ − r)²) over the fitted points.
    pub rms: f64,
}

/// A connected foreground component with its blob measurements.
#[derive(Debug, Clone)]
pub struct Region {
    pub pixels: Vec<(u32, u32)>,
    /// Pixel count.
    pub area: f64,
    /// Corner-corrected length of the outer boundary.
    pub perimeter: f64,
    /// 4π·area / perimeter², capped at 1.1 (discretization can overshoot 1).
    pub circularity: f64,
    bbox: (u32, u32, u32, u32),
}

impl Region {
    /// Bounding box as (x, y, w, h).
    pub fn bbox(&self) -> (u32, u32, u32, u32) {
        self.bbox
    }

    /// Outer boundary as a closed pixel loop (Moore trace).
    pub fn outer_contour(&self) -> Vec<(u32, u32)> {
        let (bx, by, bw, bh) = self.bbox;
        let mut local = vec![false; bw as usize * bh as usize];
        for &(x, y) in &self.pixels {
            local[(y - by) as usize * bw as usize + (x - bx) as usize] = true;
        }
        let is_fg = |x: i64, y: i64| -> bool {
            x >= 0
                && y >= 0
                && x < bw as i64
                && y < bh as i64
                && local[y as usize * bw as usize + x as usize]
        };
        let start = self
            .pixels
            .iter()
            .map(|&(x, y)| (x - bx, y - by))
            .min_by_key(|&(x, y)| (y, x))
            .expect("region has pixels");
        trace_outer_contour(&is_fg, start)
            .into_iter()
            .map(|(x, y)| (x + bx, y + by))
            .collect()
    }
}

/// Noise-reduction choices applied before segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessMode {
    HistEq,
    Gaussian,
    HistEqGaussian,
}

/// Histogram equalization mapping v ↦ round(cdf(v)·255). A single-level
/// image has a degenerate histogram and is returned unchanged.
pub fn hist_eq(image: &GrayImage) -> GrayImage {
    let mut hist = [0usize; 256];
    for &p in image.data() {
        hist[p as usize] += 1;
    }
    if hist.iter().filter(|&&c| c > 0).count() <= 1 {
        return image.clone();
    }
    let total = image.data().len() as f64;
    let mut lut = [0u8; 256];
    let mut cum = 0usize;
    for (v, count) in hist.iter().enumerate() {
        cum += count;
        lut[v] = ((cum as f64 / total) * 255.0).round() as u8;
    }
    let data = image.data().iter().map(|&p| lut[p as usize]).collect();
    GrayImage::new(image.width(), image.height(), data).expect("dimensions unchanged")
}

/// Spatial Gaussian smoothing of an 8-bit image.
pub fn gaussian_smooth(image: &GrayImage, sigma: f64) -> GrayImage {
    let blurred = gaussian_blur_f64(
        &image.to_f64(),
        image.width() as usize,
        image.height() as usize,
        sigma,
    );
    GrayImage::from_f64_clamped(image.width(), image.height(), &blurred)
        .expect("dimensions unchanged")
}

pub const PREPROCESS_SIGMA_DEFAULT: f64 = 1.5;

pub fn preprocess(image: &GrayImage, mode: PreprocessMode) -> GrayImage {
    preprocess_with(image, mode, PREPROCESS_SIGMA_DEFAULT)
}

pub fn preprocess_with(image: &GrayImage, mode: PreprocessMode, sigma: f64) -> GrayImage {
    match mode {
        PreprocessMode::HistEq => hist_eq(image),
        PreprocessMode::Gaussian => gaussian_smooth(image, sigma),
        PreprocessMode::HistEqGaussian => gaussian_smooth(&hist_eq(image), sigma),
    }
}

/// Threshold selection for segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Fixed(u8),
    Otsu,
}

/// Otsu's threshold: exhaustive 0..255 scan maximizing between-class
/// variance. Foreground is `value > level`. A single-level histogram
/// returns that level (empty foreground).
pub fn otsu_level_of(data: &[u8]) -> u8 {
    let mut hist = [0f64; 256];
    for &p in data {
        hist[p as usize] += 1.0;
    }
    let total: f64 = data.len() as f64;
    let total_mean: f64 = hist
        .iter()
        .enumerate()
        .map(|(v, c)| v as f64 * c)
        .sum::<f64>()
        / total;

    let mut best_level = 0u8;
    let mut best_var = -1.0;
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    for t in 0..256usize {
        w0 += hist[t];
        sum0 += t as f64 * hist[t];
        if w0 == 0.0 {
            continue;
        }
        let w1 = total - w0;
        if w1 == 0.0 {
            break;
        }
        let mu0 = sum0 / w0;
        let mu1 = (total_mean * total - sum0) / w1;
        let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if var > best_var {
            best_var = var;
            best_level = t as u8;
        }
    }
    if best_var <= 0.0 {
        // Degenerate histogram: put every pixel below the threshold.
        return data
            .iter()
            .copied()
            .max()
            .unwrap_or(0);
    }
    best_level
}

pub fn otsu_level(image: &GrayImage) -> u8 {
    otsu_level_of(image.data())
}

/// Binarizes (`value > level`) and applies a 3x3 morphological opening.
pub fn segment(image: &GrayImage, threshold: Threshold) -> Mask {
    let level = match threshold {
        Threshold::Fixed(l) => l,
        Threshold::Otsu => otsu_level(image),
    };
    let mut mask = Mask::zeros(image.width(), image.height());
    for v in 0..image.height() {
        for u in 0..image.width() {
            if image.get(u, v) > level {
                mask.set(u, v, 1);
            }
        }
    }
    mask.open()
}

/// 8-connected component labeling over a binary mask.
pub fn connected_components(mask: &Mask) -> Vec<Region> {
    let (w, h) = (mask.width(), mask.height());
    let mut visited = vec![false; w as usize * h as usize];
    let mut regions = Vec::new();
    let idx = |x: u32, y: u32| y as usize * w as usize + x as usize;

    for sy in 0..h {
        for sx in 0..w {
            if mask.get(sx, sy) == 0 || visited[idx(sx, sy)] {
                continue;
            }
            let mut pixels = Vec::new();
            let mut stack = vec![(sx, sy)];
            visited[idx(sx, sy)] = true;
            let (mut min_x, mut min_y, mut max_x, mut max_y) = (sx, sy, sx, sy);
            while let Some((x, y)) = stack.pop() {
                pixels.push((x, y));
                min_x = min_x.min(x);
                min_y = min_y.min(y);
                max_x = max_x.max(x);
                max_y = max_y.max(y);
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx >= 0
                            && ny >= 0
                            && nx < w as i64
                            && ny < h as i64
                            && mask.get(nx as u32, ny as u32) == 1
                            && !visited[idx(nx as u32, ny as u32)]
                        {
                            visited[idx(nx as u32, ny as u32)] = true;
                            stack.push((nx as u32, ny as u32));
                        }
                    }
                }
            }
            let bbox = (min_x, min_y, max_x - min_x + 1, max_y - min_y + 1);
            let mut region = Region {
                pixels,
                area: 0.0,
                perimeter: 0.0,
                circularity: 0.0,
                bbox,
            };
            region.area = region.pixels.len() as f64;
            region.perimeter = contour_perimeter(&region.outer_contour());
            let c = 4.0 * std::f64::consts::PI * region.area / region.perimeter.powi(2);
            region.circularity = c.clamp(f64::MIN_POSITIVE, 1.1);
            regions.push(region);
        }
    }
    regions
}

/// Keeps regions with area in [area_min, area_max] and circularity ≥ circ_min.
pub fn screen_regions(
    regions: Vec<Region>,
    area_min: f64,
    area_max: f64,
    circ_min: f64,
) -> Vec<Region> {
    regions
        .into_iter()
        .filter(|r| r.area >= area_min && r.area <= area_max && r.circularity >= circ_min)
        .collect()
}

/// Algebraic (Kåsa) least-squares circle fit, minimizing
/// Σ((xᵢ−xc)² + (yᵢ−yc)² − r²)². Closed form and deterministic.
pub fn fit_circle_lsq(points: &[(f64, f64)]) -> Result<CircleFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "circle fit needs >= 3 points, got {}",
            points.len()
        )));
    }
    // Center the data for conditioning.
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;

    // Solve (x² + y² + D·x + E·y + F = 0) in least squares over (D, E, F).
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for &(px, py) in points {
        let (x, y) = (px - mx, py - my);
        let row = [x, y, 1.0];
        let rhs = -(x * x + y * y);
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * rhs;
        }
    }
    let a = nalgebra::Matrix3::from_fn(|i, j| ata[i][j]);
    let b = nalgebra::Vector3::new(atb[0], atb[1], atb[2]);
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::DegenerateFit("collinear circle-fit input".into()))?;
    let (d, e, f) = (sol[0], sol[1], sol[2]);
    let r2 = d * d / 4.0 + e * e / 4.0 - f;
    if !(r2 > 0.0 && r2.is_finite()) {
        return Err(Error::DegenerateFit("circle fit collapsed".into()));
    }
    let xc = -d / 2.0 + mx;
    let yc = -e / 2.0 + my;
    let r = r2.sqrt();
    let rms = (points
        .iter()
        .map(|&(px, py)| {
            let dist = ((px - xc).powi(2) + (py - yc).powi(2)).sqrt();
            (dist - r).powi(2)
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(CircleFit { xc, yc, r, rms })
}

/// Detection parameters for the classical chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    pub preprocess: PreprocessMode,
    pub gaussian_sigma: f64,
    pub threshold: Threshold,
    pub area_min: f64,
    pub area_max: f64,
    pub circ_min: f64,
    /// Candidates whose circle-fit rms exceeds this are dropped.
    pub rms_max: f64,
    /// Padding added around a region's bounding box when forming its ROI.
    pub roi_pad: u32,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            preprocess: PreprocessMode::Gaussian,
            gaussian_sigma: PREPROCESS_SIGMA_DEFAULT,
            threshold: Threshold::Otsu,
            area_min: 50.0,
            area_max: 1.0e6,
            circ_min: 0.7,
            rms_max: 1.5,
            roi_pad: 4,
        }
    }
}

impl DetectConfig {
    /// Derives screening bounds from marker geometry, camera intrinsics and
    /// an operating depth range, instead of hard-coded pixel counts. The
    /// bounds span the projected inner-hole disk at the far end through the
    /// projected outer disk at the near end, with ±20% margins.
    pub fn for_camera(
        ring: &RingSpec,
        intr: &CameraIntrinsics,
        depth_range_mm: (f64, f64),
    ) -> Self {
        let (bounds_min, bounds_max) = Self::area_bounds(ring, intr, depth_range_mm);
        Self {
            area_min: bounds_min,
            area_max: bounds_max,
            ..Self::default()
        }
    }

    pub fn area_bounds(
        ring: &RingSpec,
        intr: &CameraIntrinsics,
        depth_range_mm: (f64, f64),
    ) -> (f64, f64) {
        let f = intr.fx.max(intr.fy);
        let r_inner_far = ring.inner_radius_mm() * f / depth_range_mm.1;
        let r_outer_near = ring.outer_radius_mm() * f / depth_range_mm.0;
        let min = 0.8 * std::f64::consts::PI * r_inner_far * r_inner_far;
        let max = 1.2 * std::f64::consts::PI * r_outer_near * r_outer_near;
        (min, max)
    }
}

/// Full classical chain: preprocess, segment, components, screening, then a
/// circle fit on each surviving region's outer contour. Candidates are
/// sorted by circularity (descending), ties by lower fit rms. No surviving
/// candidates yields an empty list.
pub fn detect_rings(image: &GrayImage, cfg: &DetectConfig) -> Vec<(RoiBox, CircleFit)> {
    let pre = preprocess_with(image, cfg.preprocess, cfg.gaussian_sigma);
    let bin = segment(&pre, cfg.threshold);
    let regions = connected_components(&bin);
    let screened = screen_regions(regions, cfg.area_min, cfg.area_max, cfg.circ_min);

    let mut out = Vec::new();
    for region in &screened {
        let contour = region.outer_contour();
        let pts: Vec<(f64, f64)> = contour
            .iter()
            .map(|&(x, y)| (x as f64, y as f64))
            .collect();
        let Ok(fit) = fit_circle_lsq(&pts) else {
            continue;
        };
        if fit.rms > cfg.rms_max {
            continue;
        }
        let (bx, by, bw, bh) = region.bbox();
        let x = bx.saturating_sub(cfg.roi_pad);
        let y = by.saturating_sub(cfg.roi_pad);
        let w = (bw + 2 * cfg.roi_pad).min(image.width() - x);
        let h = (bh + 2 * cfg.roi_pad).min(image.height() - y);
        out.push((
            RoiBox {
                x,
                y,
                w,
                h,
                score: region.circularity.min(1.0),
            },
            fit,
        ));
    }
    out.sort_by(|a, b| {
        b.0.score
            .total_cmp(&a.0.score)
            .then(a.1.rms.total_cmp(&b.1.rms))
    });
    out
}

#[derive(Debug, Deserialize)]
struct RoiDoc {
    x: i64,
    y: i64,
    w: i64,
    h: i64,
    score: f64,
}

/// Parses and validates an ROI interchange document (a JSON array of
/// `{x, y, w, h, score}` objects). Boxes reaching outside the image are
/// clamped with a warning; boxes empty after clamping are rejected.
pub fn ingest_roi(document: &str, width: u32, height: u32) -> Result<Vec<RoiBox>> {
    let docs: Vec<RoiDoc> =
        serde_json::from_str(document).map_err(|e| Error::Parse(format!("roi document: {e}")))?;
    let mut out = Vec::new();
    for (i, d) in docs.iter().enumerate() {
        if !(0.0..=1.0).contains(&d.score) || !d.score.is_finite() {
            return Err(Error::Parse(format!(
                "roi {i}: score {} outside [0, 1]",
                d.score
            )));
        }
        if d.w <= 0 || d.h <= 0 {
            return Err(Error::Parse(format!("roi {i}: non-positive size")));
        }
        let x0 = d.x.max(0);
        let y0 = d.y.max(0);
        let x1 = (d.x + d.w).min(width as i64);
        let y1 = (d.y + d.h).min(height as i64);
        if x0 != d.x || y0 != d.y || x1 != d.x + d.w || y1 != d.y + d.h {
            if x1 <= x0 || y1 <= y0 {
                log::warn!("roi {i} lies entirely outside the {width}x{height} image; dropped");
                continue;
            }
            log::warn!("roi {i} extends past the {width}x{height} image; clamped");
        }
        out.push(RoiBox {
            x: x0 as u32,
            y: y0 as u32,
            w: (x1 - x0) as u32,
            h: (y1 - y0) as u32,
            score: d.score,
        });
    }
    Ok(out)
}
