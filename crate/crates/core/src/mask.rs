//! Binary masks, contour extraction, and mask-multiplication depth cropping.
//!
//! Depth values never pass through an 8-bit representation: the mask
//! multiplies native-precision depth values directly.

use std::collections::VecDeque;
use std::path::Path;

use crate::detect::{connected_components, RoiBox};
use crate::raster::{gaussian_blur_f64, DepthImage, GrayImage};
use crate::{Error, Result};

/// Row-major binary raster with values exactly 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Mask {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn ones(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![1; width as usize * height as usize],
        }
    }

    pub fn from_data(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch {
                expected: format!("{} pixels", width as usize * height as usize),
                actual: format!("{} values", data.len()),
            });
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("mask values must be 0 or 1".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> u8 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, value: u8) {
        debug_assert!(value <= 1);
        self.data[v as usize * self.width as usize + u as usize] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    /// Logical AND with another mask of equal dimensions.
    pub fn and(&self, other: &Mask) -> Result<Mask> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", self.width, self.height),
                actual: format!("{}x{}", other.width, other.height),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a & b)
            .collect();
        Ok(Mask {
            width: self.width,
            height: self.height,
            data,
        })
    }

    /// Binary dilation with a 3x3 structuring element, applied `px` times.
    pub fn dilate(&self, px: u32) -> Mask {
        let mut cur = self.clone();
        for _ in 0..px {
            let mut next = cur.clone();
            for y in 0..self.height as i64 {
                for x in 0..self.width as i64 {
                    if cur.get(x as u32, y as u32) == 1 {
                        continue;
                    }
                    'probe: for dy in -1..=1i64 {
                        for dx in -1..=1i64 {
                            let (nx, ny) = (x + dx, y + dy);
                            if nx >= 0
                                && ny >= 0
                                && nx < self.width as i64
                                && ny < self.height as i64
                                && cur.get(nx as u32, ny as u32) == 1
                            {
                                next.set(x as u32, y as u32, 1);
                                break 'probe;
                            }
                        }
                    }
                }
            }
            cur = next;
        }
        cur
    }

    /// Binary erosion with a 3x3 structuring element; out-of-bounds counts
    /// as background.
    pub fn erode(&self) -> Mask {
        let mut out = Mask::zeros(self.width, self.height);
        for y in 0..self.height as i64 {
            'pixel: for x in 0..self.width as i64 {
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0
                            || ny < 0
                            || nx >= self.width as i64
                            || ny >= self.height as i64
                            || self.get(nx as u32, ny as u32) == 0
                        {
                            continue 'pixel;
                        }
                    }
                }
                out.set(x as u32, y as u32, 1);
            }
        }
        out
    }

    /// Morphological opening (erode then dilate) with the 3x3 element.
    pub fn open(&self) -> Mask {
        self.erode().dilate(1)
    }

    /// Exports the mask as an 8-bit PNG with values {0, 255}.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let gray = GrayImage::new(
            self.width,
            self.height,
            self.data.iter().map(|&v| v * 255).collect(),
        )?;
        gray.save_png(path)
    }
}

/// Clockwise 8-neighborhood starting east.
const NEIGHBORS8: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// Moore-neighbor boundary trace of the component containing `start`,
/// which must be the component's topmost-then-leftmost pixel. Returns the
/// closed outer contour as a pixel loop (single pixel for isolated points).
pub(crate) fn trace_outer_contour(
    is_fg: &dyn Fn(i64, i64) -> bool,
    start: (u32, u32),
) -> Vec<(u32, u32)> {
    let start_i = (start.0 as i64, start.1 as i64);
    let mut contour = vec![start];

    // The backtrack pixel of the topmost-leftmost start is its west neighbor.
    let first = next_boundary_pixel(is_fg, start_i, 4);
    let Some(first_state) = first else {
        return contour; // isolated pixel
    };
    // The walk is deterministic in the (pixel, entry-direction) state, so
    // revisiting the first state closes the loop exactly.
    let mut state = first_state;
    let limit = 10_000_000usize;
    for _ in 0..limit {
        contour.push((state.0 .0 as u32, state.0 .1 as u32));
        let backtrack = (state.1 + 4) % 8;
        let next = next_boundary_pixel(is_fg, state.0, backtrack)
            .expect("boundary pixel keeps at least the pixel it was entered from");
        if next == first_state {
            break;
        }
        state = next;
    }
    contour
}

fn next_boundary_pixel(
    is_fg: &dyn Fn(i64, i64) -> bool,
    from: (i64, i64),
    backtrack_dir: usize,
) -> Option<((i64, i64), usize)> {
    for i in 1..=8 {
        let d = (backtrack_dir + i) % 8;
        let np = (from.0 + NEIGHBORS8[d].0, from.1 + NEIGHBORS8[d].1);
        if is_fg(np.0, np.1) {
            return Some((np, d));
        }
    }
    None
}

/// Corner-corrected chain-code perimeter (Vossepoel-Smeulders weights).
pub(crate) fn contour_perimeter(contour: &[(u32, u32)]) -> f64 {
    if contour.len() < 2 {
        return 1.0;
    }
    let mut axial = 0usize;
    let mut diagonal = 0usize;
    let mut corners = 0usize;
    let mut prev_code: Option<(i64, i64)> = None;
    let n = contour.len();
    for i in 0..n {
        let a = contour[i];
        let b = contour[(i + 1) % n];
        let code = (b.0 as i64 - a.0 as i64, b.1 as i64 - a.1 as i64);
        if code == (0, 0) {
            continue;
        }
        if code.0 != 0 && code.1 != 0 {
            diagonal += 1;
        } else {
            axial += 1;
        }
        if let Some(p) = prev_code {
            if p != code {
                corners += 1;
            }
        }
        prev_code = Some(code);
    }
    (0.980 * axial as f64 + 1.406 * diagonal as f64 - 0.091 * corners as f64).max(1.0)
}

fn adjacent8(a: (u32, u32), b: (u32, u32)) -> bool {
    let dx = (a.0 as i64 - b.0 as i64).abs();
    let dy = (a.1 as i64 - b.1 as i64).abs();
    dx <= 1 && dy <= 1
}

/// Extracts the outer closed contour of the dominant bright blob inside the
/// ROI: Gaussian smoothing, Otsu binarization, largest component, boundary
/// trace. Coordinates are in full-image pixels.
pub fn extract_contour(image: &GrayImage, roi: &RoiBox) -> Result<Vec<(u32, u32)>> {
    if roi.x + roi.w > image.width() || roi.y + roi.h > image.height() || roi.w == 0 || roi.h == 0 {
        return Err(Error::InvalidArgument(format!(
            "roi {}x{}+{}+{} outside {}x{} image",
            roi.w,
            roi.h,
            roi.x,
            roi.y,
            image.width(),
            image.height()
        )));
    }
    let (rw, rh) = (roi.w as usize, roi.h as usize);
    let mut sub = vec![0.0f64; rw * rh];
    for y in 0..rh {
        for x in 0..rw {
            sub[y * rw + x] = image.get(roi.x + x as u32, roi.y + y as u32) as f64;
        }
    }
    let smoothed = gaussian_blur_f64(&sub, rw, rh, 1.5);
    let rounded: Vec<u8> = smoothed
        .iter()
        .map(|&v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    let level = crate::detect::otsu_level_of(&rounded);
    let mut bin = Mask::zeros(roi.w, roi.h);
    for (i, &v) in rounded.iter().enumerate() {
        if v > level {
            bin.data[i] = 1;
        }
    }
    let regions = connected_components(&bin);
    let largest = regions
        .into_iter()
        .max_by(|a, b| a.area.total_cmp(&b.area))
        .ok_or(Error::EmptyContour)?;
    let contour = largest.outer_contour();
    Ok(contour
        .into_iter()
        .map(|(x, y)| (x + roi.x, y + roi.y))
        .collect())
}

/// Builds a filled mask from a closed contour: the contour plus everything
/// it encloses, including any interior holes, is set to 1.
pub fn make_mask(contour: &[(u32, u32)], width: u32, height: u32) -> Result<Mask> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("mask dimensions must be >= 1".into()));
    }
    if contour.is_empty() {
        return Err(Error::EmptyContour);
    }
    let n = contour.len();
    for i in 0..n {
        let a = contour[i];
        let b = contour[(i + 1) % n];
        if !adjacent8(a, b) {
            return Err(Error::OpenContour);
        }
        if a.0 >= width || a.1 >= height {
            return Err(Error::InvalidArgument(format!(
                "contour pixel ({}, {}) outside {width}x{height}",
                a.0, a.1
            )));
        }
    }

    let mut mask = Mask::ones(width, height);
    let mut on_contour = vec![false; width as usize * height as usize];
    for &(x, y) in contour {
        on_contour[y as usize * width as usize + x as usize] = true;
    }

    // Flood the exterior from the border with 4-connectivity; an 8-connected
    // contour is impermeable to it. Whatever is not reached stays 1.
    let mut queue = VecDeque::new();
    let push = |mask: &mut Mask, queue: &mut VecDeque<(u32, u32)>, x: u32, y: u32| {
        let idx = y as usize * width as usize + x as usize;
        if !on_contour[idx] && mask.get(x, y) == 1 {
            mask.set(x, y, 0);
            queue.push_back((x, y));
        }
    };
    for x in 0..width {
        push(&mut mask, &mut queue, x, 0);
        push(&mut mask, &mut queue, x, height - 1);
    }
    for y in 0..height {
        push(&mut mask, &mut queue, 0, y);
        push(&mut mask, &mut queue, width - 1, y);
    }
    while let Some((x, y)) = queue.pop_front() {
        for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx >= 0 && ny >= 0 && nx < width as i64 && ny < height as i64 {
                push(&mut mask, &mut queue, nx as u32, ny as u32);
            }
        }
    }
    Ok(mask)
}

/// Elementwise product of depth and mask, plus the surviving `(u, v, depth)`
/// triples (mask 1 and depth valid), in row-major order.
pub fn crop_depth(depth: &DepthImage, mask: &Mask) -> Result<(DepthImage, Vec<(u32, u32, f64)>)> {
    if depth.width() != mask.width() || depth.height() != mask.height() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", depth.width(), depth.height()),
            actual: format!("{}x{}", mask.width(), mask.height()),
        });
    }
    let mut out = DepthImage::zeros(depth.width(), depth.height());
    let mut survivors = Vec::new();
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            let d = depth.get(u, v) * mask.get(u, v) as f64;
            out.set(u, v, d);
            if d > 0.0 {
                survivors.push((u, v, d));
            }
        }
    }
    Ok((out, survivors))
}
