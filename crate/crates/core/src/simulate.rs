//! Synthetic structured-light scene generator: paired grayscale + depth
//! frames of a ring marker resting on a surface, with ground truth.
//!
//! Geometry: the marker frame has its origin at the center of the ring's
//! top face, +z pointing into the scene (away from the camera at zero
//! tilt). `distance_mm` is the camera-frame z of the top-face center; the
//! skin surface passes `thickness_mm` behind it. The marker face carries
//! the white annulus plus a surrounding matte black contrast band at the
//! same height.

use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{project, CameraIntrinsics};
use crate::geom::{Point3, RigidTransform};
use crate::raster::{gaussian_blur_f64, DepthImage, GrayImage};
use crate::ring::RingSpec;
use crate::{Error, Result};

/// Surface the marker rests on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    Plane,
    /// Spherical cap bulging toward the camera; the marker rim rests on it.
    SphereCap { radius_mm: f64 },
}

/// Sensor noise model. All parameters are simulator configuration; the
/// depth-noise and blur curves are monotone-linear in working distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub z_sigma_at_400: f64,
    /// Extra depth-noise std per millimeter beyond 400 mm.
    pub z_sigma_slope: f64,
    pub blur_px_at_400: f64,
    pub blur_slope: f64,
    pub speckle_density: f64,
    pub dropout_rate: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            z_sigma_at_400: 0.3,
            z_sigma_slope: 0.001,
            blur_px_at_400: 1.2,
            blur_slope: 0.002,
            speckle_density: 0.0,
            dropout_rate: 0.005,
        }
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            z_sigma_at_400: 0.0,
            z_sigma_slope: 0.0,
            blur_px_at_400: 0.0,
            blur_slope: 0.0,
            speckle_density: 0.0,
            dropout_rate: 0.0,
        }
    }

    pub fn z_sigma(&self, distance_mm: f64) -> f64 {
        (self.z_sigma_at_400 + self.z_sigma_slope * (distance_mm - 400.0)).max(0.0)
    }

    pub fn blur_px(&self, distance_mm: f64) -> f64 {
        (self.blur_px_at_400 + self.blur_slope * (distance_mm - 400.0)).max(0.0)
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.z_sigma_at_400,
            self.z_sigma_slope,
            self.blur_px_at_400,
            self.blur_slope,
            self.speckle_density,
            self.dropout_rate,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("noise parameters must be >= 0".into()));
        }
        if self.speckle_density > 1.0 || self.dropout_rate > 1.0 {
            return Err(Error::InvalidArgument(
                "speckle/dropout fractions must be <= 1".into(),
            ));
        }
        Ok(())
    }
}

fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 580.0,
        fy: 580.0,
        cx: 320.0,
        cy: 240.0,
        width: 640,
        height: 480,
    }
}

/// Full scene description; deterministic given `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub ring: RingSpec,
    pub intrinsics: CameraIntrinsics,
    /// Camera-frame z of the ring's top-face center, mm.
    pub distance_mm: f64,
    pub tilt_deg: f64,
    /// In-plane offset of the marker from the optical axis, mm.
    pub offset_mm: [f64; 2],
    pub surface: Surface,
    /// Illuminance proxy in [0, 1].
    pub lighting_level: f64,
    /// Relative amplitude of the smooth illumination falloff across the
    /// frame (uneven ambient light).
    pub illum_gradient: f64,
    /// Width of the matte black contrast band around the white annulus, mm.
    pub black_band_mm: f64,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            ring: RingSpec::default(),
            intrinsics: default_intrinsics(),
            distance_mm: 400.0,
            tilt_deg: 0.0,
            offset_mm: [0.0, 0.0],
            surface: Surface::Plane,
            lighting_level: 1.0,
            illum_gradient: 0.15,
            black_band_mm: 4.0,
            noise: NoiseModel::default(),
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.ring.validate()?;
        self.intrinsics.validate()?;
        if !(200.0..=800.0).contains(&self.distance_mm) {
            return Err(Error::InvalidArgument(format!(
                "distance {} outside [200, 800] mm",
                self.distance_mm
            )));
        }
        if !(0.0..=45.0).contains(&self.tilt_deg) {
            return Err(Error::InvalidArgument(format!(
                "tilt {} outside [0, 45] deg",
                self.tilt_deg
            )));
        }
        if !(0.0..=1.0).contains(&self.lighting_level) {
            return Err(Error::InvalidArgument("lighting_level outside [0, 1]".into()));
        }
        if self.black_band_mm < 0.0 {
            return Err(Error::InvalidArgument("black_band_mm must be >= 0".into()));
        }
        if let Surface::SphereCap { radius_mm } = self.surface {
            let rim = self.ring.outer_radius_mm() + self.black_band_mm;
            if radius_mm <= rim {
                return Err(Error::InvalidArgument(format!(
                    "sphere cap radius {radius_mm} must exceed the marker rim {rim}"
                )));
            }
        }
        self.noise.validate()
    }

    /// Marker frame to camera frame.
    pub fn marker_pose(&self) -> RigidTransform {
        RigidTransform::translation_xyz(self.offset_mm[0], self.offset_mm[1], self.distance_mm)
            .compose(&RigidTransform::rotation_x(self.tilt_deg.to_radians()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// Ground truth for a rendered frame. `center` is the top-face center of
/// the ring (camera frame); `projected_outer_radius` is the nominal
/// pinhole projection `outer_radius·fx/distance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub center: Point3,
    pub normal: [f64; 3],
    pub projected_center: [f64; 2],
    pub projected_outer_radius: f64,
}

const TONE_RING: f64 = 220.0;
const TONE_BAND: f64 = 30.0;
const TONE_SKIN: f64 = 120.0;
const TONE_VOID: f64 = 20.0;
const SUPERSAMPLE: u32 = 4;

struct RayScene {
    cam_origin_m: Vector3<f64>,
    rot_inv: RigidTransform,
    ring: RingSpec,
    band_outer: f64,
    surface: Surface,
    sphere_center_z: f64,
    sphere_radius: f64,
}

enum Hit {
    Ring(f64),
    Band(f64),
    Skin(f64),
    Miss,
}

impl RayScene {
    fn new(cfg: &SceneConfig) -> Self {
        let pose = cfg.marker_pose();
        let inv = pose.inverse();
        let band_outer = cfg.ring.outer_radius_mm() + cfg.black_band_mm;
        let (sphere_center_z, sphere_radius) = match cfg.surface {
            Surface::Plane => (0.0, 0.0),
            Surface::SphereCap { radius_mm } => (
                cfg.ring.thickness_mm + (radius_mm * radius_mm - band_outer * band_outer).sqrt(),
                radius_mm,
            ),
        };
        Self {
            cam_origin_m: *inv.translation(),
            rot_inv: inv,
            ring: cfg.ring,
            band_outer,
            surface: cfg.surface,
            sphere_center_z,
            sphere_radius,
        }
    }

    /// Casts the camera ray through pixel (u, v); returns the hit kind and
    /// the camera-frame depth (z) of the hit.
    fn cast(&self, dir_cam: Vector3<f64>) -> Hit {
        let o = self.cam_origin_m;
        let d = self.rot_inv.rotate_vector(&dir_cam);

        // Marker top face: plane z_m = 0.
        if d.z.abs() > 1e-12 {
            let t = -o.z / d.z;
            if t > 0.0 {
                let q = o + t * d;
                let rho = (q.x * q.x + q.y * q.y).sqrt();
                if rho >= self.ring.inner_radius_mm() && rho <= self.band_outer {
                    let depth = t * dir_cam.z;
                    return if rho <= self.ring.outer_radius_mm() {
                        Hit::Ring(depth)
                    } else {
                        Hit::Band(depth)
                    };
                }
            }
        }

        // Skin surface: plane z_m = thickness, or the sphere cap.
        match self.surface {
            Surface::Plane => {
                if d.z.abs() > 1e-12 {
                    let t = (self.ring.thickness_mm - o.z) / d.z;
                    if t > 0.0 {
                        return Hit::Skin(t * dir_cam.z);
                    }
                }
                Hit::Miss
            }
            Surface::SphereCap { .. } => {
                let c = Vector3::new(0.0, 0.0, self.sphere_center_z);
                let oc = o - c;
                let a = d.norm_squared();
                let b = 2.0 * oc.dot(&d);
                let k = oc.norm_squared() - self.sphere_radius * self.sphere_radius;
                let disc = b * b - 4.0 * a * k;
                if disc < 0.0 {
                    return Hit::Miss;
                }
                let t = (-b - disc.sqrt()) / (2.0 * a);
                if t > 0.0 {
                    Hit::Skin(t * dir_cam.z)
                } else {
                    Hit::Miss
                }
            }
        }
    }
}

/// Renders one frame pair plus ground truth; bit-identical for equal
/// configs (the seed drives all noise).
pub fn render(cfg: &SceneConfig) -> Result<(GrayImage, DepthImage, GroundTruth)> {
    cfg.validate()?;
    let intr = &cfg.intrinsics;
    let (w, h) = (intr.width as usize, intr.height as usize);
    let scene = RayScene::new(cfg);
    let light = cfg.lighting_level;

    let pose = cfg.marker_pose();
    let center = pose.apply(&Point3::origin());
    let normal_v = pose.rotate_vector(&Vector3::new(0.0, 0.0, -1.0));
    let (pu, pv) = project(&center, intr)?;
    let truth = GroundTruth {
        center,
        normal: [normal_v.x, normal_v.y, normal_v.z],
        projected_center: [pu, pv],
        projected_outer_radius: cfg.ring.outer_radius_mm() * intr.fx / cfg.distance_mm,
    };

    // Supersample only near the marker; the background is smooth.
    let margin_px = scene.band_outer * intr.fx.max(intr.fy)
        / (cfg.distance_mm - scene.band_outer).max(1.0)
        + 6.0;
    let (bx0, bx1) = (
        (pu - margin_px).floor().max(0.0) as usize,
        (pu + margin_px).ceil().min(w as f64 - 1.0) as usize,
    );
    let (by0, by1) = (
        (pv - margin_px).floor().max(0.0) as usize,
        (pv + margin_px).ceil().min(h as f64 - 1.0) as usize,
    );

    let illum = |u: f64, v: f64| -> f64 {
        1.0 + cfg.illum_gradient * (0.8 * (u / w as f64 - 0.5) + 0.5 * (v / h as f64 - 0.5))
    };
    let tone_of = |hit: &Hit| -> f64 {
        match hit {
            Hit::Ring(_) => TONE_RING * light,
            Hit::Band(_) => TONE_BAND * light,
            Hit::Skin(_) => TONE_SKIN * light,
            Hit::Miss => TONE_VOID * light,
        }
    };
    let ray_dir = |u: f64, v: f64| -> Vector3<f64> {
        Vector3::new((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0)
    };

    let mut gray = vec![0.0f64; w * h];
    let mut depth = DepthImage::zeros(intr.width, intr.height);
    for y in 0..h {
        for x in 0..w {
            let (uf, vf) = (x as f64, y as f64);
            let center_hit = scene.cast(ray_dir(uf, vf));
            let tone = if x >= bx0 && x <= bx1 && y >= by0 && y <= by1 {
                let mut acc = 0.0;
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let du = (sx as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                        let dv = (sy as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                        acc += tone_of(&scene.cast(ray_dir(uf + du, vf + dv)));
                    }
                }
                acc / (SUPERSAMPLE * SUPERSAMPLE) as f64
            } else {
                tone_of(&center_hit)
            };
            gray[y * w + x] = tone * illum(uf, vf);
            let d = match center_hit {
                Hit::Ring(d) | Hit::Band(d) | Hit::Skin(d) => d,
                Hit::Miss => 0.0,
            };
            depth.set(x as u32, y as u32, d.max(0.0));
        }
    }

    // Optics blur on the grayscale channel.
    let blur = cfg.noise.blur_px(cfg.distance_mm);
    if blur > 0.0 {
        gray = gaussian_blur_f64(&gray, w, h, blur);
    }

    // Speckle (projected-pattern noise) on the grayscale channel.
    if cfg.noise.speckle_density > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        for g in gray.iter_mut() {
            if rng.gen_bool(cfg.noise.speckle_density) {
                *g = if rng.gen_bool(0.5) { 255.0 * light } else { 0.0 };
            }
        }
    }

    // Depth noise and dropout.
    let sigma = cfg.noise.z_sigma(cfg.distance_mm);
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(2);
        for d in depth.data_mut().iter_mut() {
            if *d > 0.0 {
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let g = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                *d = (*d + sigma * g).max(0.0);
            }
        }
    }
    if cfg.noise.dropout_rate > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(3);
        for d in depth.data_mut().iter_mut() {
            if *d > 0.0 && rng.gen_bool(cfg.noise.dropout_rate) {
                *d = 0.0;
            }
        }
    }

    let gray_img = GrayImage::from_f64_clamped(intr.width, intr.height, &gray)?;
    Ok((gray_img, depth, truth))
}

/// Sweep axis for dataset generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Distance,
    Tilt,
    ZSigma,
}

/// One rendered frame in a dataset manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub id: String,
    pub gray: String,
    pub depth: String,
    #[serde(default)]
    pub roi: Option<String>,
    pub ground_truth: GroundTruth,
    pub distance_mm: f64,
    pub tilt_deg: f64,
    pub z_sigma_mm: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepManifest {
    pub frames: Vec<ManifestFrame>,
}

impl SweepManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Renders `runs_per_value` seeded frames per axis value into `out_dir`
/// (gray PNG + 16-bit depth PNG at 0.1 mm units) and writes
/// `manifest.json`. Seeds are `base.seed + frame index`, so every frame is
/// distinct yet reproducible.
pub fn sweep(
    base: &SceneConfig,
    axis: SweepAxis,
    values: &[f64],
    runs_per_value: usize,
    out_dir: &Path,
) -> Result<SweepManifest> {
    if values.is_empty() || runs_per_value == 0 {
        return Err(Error::InvalidArgument(
            "sweep needs at least one value and one run".into(),
        ));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut frames = Vec::new();
    let mut index = 0u64;
    for (vi, &value) in values.iter().enumerate() {
        for run in 0..runs_per_value {
            let mut cfg = base.clone();
            match axis {
                SweepAxis::Distance => cfg.distance_mm = value,
                SweepAxis::Tilt => cfg.tilt_deg = value,
                SweepAxis::ZSigma => cfg.noise.z_sigma_at_400 = value,
            }
            cfg.seed = base.seed + index;
            index += 1;

            let (gray, depth, truth) = render(&cfg)?;
            let id = format!("v{vi:02}_r{run:03}");
            let gray_name = format!("{id}_gray.png");
            let depth_name = format!("{id}_depth.png");
            gray.save_png(&out_dir.join(&gray_name))?;
            depth.save_png(&out_dir.join(&depth_name))?;
            frames.push(ManifestFrame {
                id,
                gray: gray_name,
                depth: depth_name,
                roi: None,
                ground_truth: truth,
                distance_mm: cfg.distance_mm,
                tilt_deg: cfg.tilt_deg,
                z_sigma_mm: cfg.noise.z_sigma_at_400,
                seed: cfg.seed,
            });
        }
    }
    let manifest = SweepManifest { frames };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
