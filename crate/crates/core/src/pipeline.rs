//! End-to-end orchestration: the baseline depth-mapping method and the
//! full refined method behind one configuration surface.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::camera::{back_project, CameraIntrinsics};
use crate::cloud::{depth_to_cloud, estimate_normals, make_ring_template, PointCloud};
use crate::detect::{detect_rings, DetectConfig, RoiBox};
use crate::fourier::enhance;
use crate::geom::Point3;
use crate::mask::{crop_depth, extract_contour, make_mask};
use crate::raster::{DepthImage, GrayImage};
use crate::refine::{locate_marker, LocateGates, MarkerPose};
use crate::ring::RingSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BaselineMapping,
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorChoice {
    Classical,
    ExternalRoi,
}

/// Pipeline configuration. [`PipelineConfig::for_camera`] derives the
/// detection screening bounds from the marker geometry and intrinsics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub intrinsics: CameraIntrinsics,
    pub ring: RingSpec,
    pub detector: DetectorChoice,
    /// Band-pass enhancement of the grayscale frame before detection
    /// (refined method only; the depth path never sees it).
    pub enhancement: bool,
    pub detect: DetectConfig,
    pub mask_dilation_px: u32,
    /// Cropped-cloud extent clamp: points farther than half this from the
    /// cloud centroid are discarded.
    pub max_roi_extent_mm: f64,
    pub normals_k: usize,
    pub template_spacing_mm: f64,
    pub gates: LocateGates,
    pub method: Method,
}

impl PipelineConfig {
    pub fn for_camera(intrinsics: CameraIntrinsics, ring: RingSpec) -> Self {
        let detect = DetectConfig::for_camera(&ring, &intrinsics, (300.0, 500.0));
        Self {
            intrinsics,
            ring,
            detector: DetectorChoice::Classical,
            enhancement: true,
            detect,
            mask_dilation_px: 1,
            max_roi_extent_mm: 60.0,
            normals_k: 20,
            template_spacing_mm: 0.5,
            gates: LocateGates::default(),
            method: Method::Refined,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            intrinsics: CameraIntrinsics,
            #[serde(default)]
            ring: RingSpec,
            detector: Option<DetectorChoice>,
            enhancement: Option<bool>,
            detect: Option<DetectConfig>,
            mask_dilation_px: Option<u32>,
            max_roi_extent_mm: Option<f64>,
            normals_k: Option<usize>,
            template_spacing_mm: Option<f64>,
            gates: Option<LocateGates>,
            method: Option<Method>,
        }
        let doc: Doc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        doc.intrinsics.validate()?;
        doc.ring.validate()?;
        let mut cfg = Self::for_camera(doc.intrinsics, doc.ring);
        if let Some(v) = doc.detector {
            cfg.detector = v;
        }
        if let Some(v) = doc.enhancement {
            cfg.enhancement = v;
        }
        if let Some(v) = doc.detect {
            cfg.detect = v;
        }
        if let Some(v) = doc.mask_dilation_px {
            cfg.mask_dilation_px = v;
        }
        if let Some(v) = doc.max_roi_extent_mm {
            cfg.max_roi_extent_mm = v;
        }
        if let Some(v) = doc.normals_k {
            cfg.normals_k = v;
        }
        if let Some(v) = doc.template_spacing_mm {
            cfg.template_spacing_mm = v;
        }
        if let Some(v) = doc.gates {
            cfg.gates = v;
        }
        if let Some(v) = doc.method {
            cfg.method = v;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrameOutcome {
    Refined { pose: MarkerPose },
    Baseline { center: Point3 },
    Failed { stage: String, reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame_id: String,
    pub method: Method,
    pub outcome: FrameOutcome,
    /// Per-stage wall-clock timings; diagnostic only, excluded from any
    /// equality or determinism comparison.
    pub timings_ms: Vec<(String, f64)>,
}

impl FrameResult {
    /// The localized center when the frame succeeded (baseline center, or
    /// an accepted refined pose).
    pub fn success_center(&self) -> Option<Point3> {
        match &self.outcome {
            FrameOutcome::Baseline { center } => Some(*center),
            FrameOutcome::Refined { pose } if pose.accepted() => Some(pose.center),
            _ => None,
        }
    }

    pub fn is_success(&self) -> bool {
        self.success_center().is_some()
    }

    fn failed(frame_id: &str, method: Method, stage: &str, reason: String) -> Self {
        Self {
            frame_id: frame_id.to_string(),
            method,
            outcome: FrameOutcome::Failed {
                stage: stage.to_string(),
                reason,
            },
            timings_ms: Vec::new(),
        }
    }
}

/// Bilinear depth lookup that skips invalid (zero) neighbors and
/// renormalizes the weights; `None` when all four neighbors are invalid
/// (the mapping-loss failure mode).
pub fn depth_lookup_bilinear(depth: &DepthImage, x: f64, y: f64) -> Option<f64> {
    let w = depth.width() as i64;
    let h = depth.height() as i64;
    let x0 = x.floor() as i64;
    let y0 = y.floor() as i64;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let mut acc = 0.0;
    let mut weight_sum = 0.0;
    for (dx, dy, wgt) in [
        (0i64, 0i64, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ] {
        let (px, py) = (x0 + dx, y0 + dy);
        if px < 0 || py < 0 || px >= w || py >= h {
            continue;
        }
        let d = depth.get(px as u32, py as u32);
        if d > 0.0 && wgt > 0.0 {
            acc += wgt * d;
            weight_sum += wgt;
        }
    }
    if weight_sum > 0.0 {
        Some(acc / weight_sum)
    } else {
        None
    }
}

/// Baseline method: fitted 2D circle center mapped through the depth image
/// and back-projected. Fails on detection loss or invalid center depth.
pub fn run_baseline(
    frame_id: &str,
    gray: &GrayImage,
    depth: &DepthImage,
    cfg: &PipelineConfig,
) -> FrameResult {
    let method = Method::BaselineMapping;
    let mut timings = Vec::new();

    let t0 = Instant::now();
    let detections = detect_rings(gray, &cfg.detect);
    timings.push(("detect".to_string(), ms_since(t0)));
    let Some((_, fit)) = detections.first() else {
        return FrameResult::failed(frame_id, method, "detect", "no ring candidate".into());
    };

    let t0 = Instant::now();
    let Some(d) = depth_lookup_bilinear(depth, fit.xc, fit.yc) else {
        return FrameResult::failed(
            frame_id,
            method,
            "depth_lookup",
            "no valid depth at the fitted center (mapping loss)".into(),
        );
    };
    let center = match back_project(fit.xc, fit.yc, d, &cfg.intrinsics) {
        Ok(p) => p,
        Err(e) => {
            return FrameResult::failed(frame_id, method, "back_project", e.to_string());
        }
    };
    timings.push(("map_3d".to_string(), ms_since(t0)));

    FrameResult {
        frame_id: frame_id.to_string(),
        method,
        outcome: FrameOutcome::Baseline { center },
        timings_ms: timings,
    }
}

/// Refined method: optional enhancement, detection (or external ROI),
/// contour mask, depth crop, back-projection, normals, then the gated
/// cone + robust-ICP localization.
pub fn run_refined(
    frame_id: &str,
    gray: &GrayImage,
    depth: &DepthImage,
    cfg: &PipelineConfig,
    rois: Option<&[RoiBox]>,
) -> FrameResult {
    let method = Method::Refined;
    let mut timings = Vec::new();

    let t0 = Instant::now();
    let enhanced = if cfg.enhancement {
        Some(enhance(gray))
    } else {
        None
    };
    timings.push(("enhance".to_string(), ms_since(t0)));

    let t0 = Instant::now();
    let roi = match cfg.detector {
        DetectorChoice::Classical => {
            let detect_input = enhanced.as_ref().unwrap_or(gray);
            let mut detections = detect_rings(detect_input, &cfg.detect);
            if detections.is_empty() && cfg.enhancement {
                // Enhancement can wash out an already-clean frame; retry on
                // the original image before giving up.
                detections = detect_rings(gray, &cfg.detect);
            }
            match detections.first() {
                Some((roi, _)) => *roi,
                None => {
                    return FrameResult::failed(
                        frame_id,
                        method,
                        "detect",
                        "no ring candidate".into(),
                    )
                }
            }
        }
        DetectorChoice::ExternalRoi => {
            let Some(list) = rois else {
                return FrameResult::failed(
                    frame_id,
                    method,
                    "detect",
                    "external-roi detector configured but no ROI supplied".into(),
                );
            };
            match list
                .iter()
                .max_by(|a, b| a.score.total_cmp(&b.score))
            {
                Some(roi) => *roi,
                None => {
                    return FrameResult::failed(frame_id, method, "detect", "empty ROI list".into())
                }
            }
        }
    };
    timings.push(("detect".to_string(), ms_since(t0)));

    // Contour extraction always runs on the original frame: the enhanced
    // image exists for detection; the depth path must not depend on it.
    let t0 = Instant::now();
    let contour = match extract_contour(gray, &roi) {
        Ok(c) => c,
        Err(e) => return FrameResult::failed(frame_id, method, "contour", e.to_string()),
    };
    let mask = match make_mask(&contour, depth.width(), depth.height()) {
        Ok(m) => m.dilate(cfg.mask_dilation_px),
        Err(e) => return FrameResult::failed(frame_id, method, "mask", e.to_string()),
    };
    timings.push(("mask".to_string(), ms_since(t0)));

    let t0 = Instant::now();
    let survivors = match crop_depth(depth, &mask) {
        Ok((_, s)) => s,
        Err(e) => return FrameResult::failed(frame_id, method, "crop", e.to_string()),
    };
    if survivors.is_empty() {
        return FrameResult::failed(frame_id, method, "crop", "no valid depth in mask".into());
    }
    let cloud = match depth_to_cloud(&survivors, &cfg.intrinsics) {
        Ok(c) => c,
        Err(e) => return FrameResult::failed(frame_id, method, "cloud", e.to_string()),
    };
    let cloud = clamp_extent(cloud, cfg.max_roi_extent_mm);
    if cloud.len() < 20 {
        return FrameResult::failed(
            frame_id,
            method,
            "cloud",
            format!("only {} points after cropping", cloud.len()),
        );
    }
    timings.push(("cloud".to_string(), ms_since(t0)));

    let t0 = Instant::now();
    let k = cfg.normals_k.min(cloud.len() - 1).max(3);
    let cloud = match estimate_normals(&cloud, k) {
        Ok(c) => c,
        Err(e) => return FrameResult::failed(frame_id, method, "normals", e.to_string()),
    };
    timings.push(("normals".to_string(), ms_since(t0)));

    let t0 = Instant::now();
    let template = match make_ring_template(&cfg.ring, cfg.template_spacing_mm) {
        Ok(t) => t,
        Err(e) => return FrameResult::failed(frame_id, method, "template", e.to_string()),
    };
    let pose = match locate_marker(&cloud, &template, &cfg.gates) {
        Ok(p) => p,
        Err(e) => return FrameResult::failed(frame_id, method, "locate", e.to_string()),
    };
    timings.push(("locate".to_string(), ms_since(t0)));

    FrameResult {
        frame_id: frame_id.to_string(),
        method,
        outcome: FrameOutcome::Refined { pose },
        timings_ms: timings,
    }
}

/// Dispatches on the configured method.
pub fn run_frame(
    frame_id: &str,
    gray: &GrayImage,
    depth: &DepthImage,
    cfg: &PipelineConfig,
    rois: Option<&[RoiBox]>,
) -> FrameResult {
    match cfg.method {
        Method::BaselineMapping => run_baseline(frame_id, gray, depth, cfg),
        Method::Refined => run_refined(frame_id, gray, depth, cfg, rois),
    }
}

fn clamp_extent(cloud: PointCloud, max_extent_mm: f64) -> PointCloud {
    if max_extent_mm <= 0.0 {
        return cloud;
    }
    let c = cloud.centroid();
    let half = max_extent_mm / 2.0;
    let points: Vec<Point3> = cloud
        .points
        .into_iter()
        .filter(|p| p.distance(&c) <= half)
        .collect();
    PointCloud::from_points(points)
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}
