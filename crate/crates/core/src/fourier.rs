//! Frequency-domain difference-of-Gaussians band-pass enhancement.
//!
//! Transforms are unitary: both directions carry a 1/√(W·H) factor, so a
//! forward/inverse round trip is the identity and Parseval energy matches
//! between domains. Spectra are stored DC-centered with the zero-frequency
//! bin at `(W/2, H/2)` (integer division).

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::raster::GrayImage;
use crate::{Error, Result};

/// Default band-pass sigmas, in frequency-domain pixels.
pub const SIGMA_NARROW_DEFAULT: f64 = 3.0;
pub const SIGMA_WIDE_DEFAULT: f64 = 15.0;

/// DC-centered complex spectrum of an image.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub width: u32,
    pub height: u32,
    pub data: Vec<Complex<f64>>,
}

/// Real-valued DC-centered frequency-domain gain.
#[derive(Debug, Clone)]
pub struct FrequencyFilter {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

fn fft_2d(data: &mut [Complex<f64>], width: usize, height: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(width)
    } else {
        planner.plan_fft_forward(width)
    };
    for row in data.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(height)
    } else {
        planner.plan_fft_forward(height)
    };
    let mut column = vec![Complex::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            column[y] = data[y * width + x];
        }
        col_fft.process(&mut column);
        for y in 0..height {
            data[y * width + x] = column[y];
        }
    }
    let scale = 1.0 / ((width * height) as f64).sqrt();
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Cyclically shifts so that bin (0,0) lands on (W/2, H/2), or back.
fn shift_dc(data: &[Complex<f64>], width: usize, height: usize, inverse: bool) -> Vec<Complex<f64>> {
    let (sx, sy) = if inverse {
        (width - width / 2, height - height / 2)
    } else {
        (width / 2, height / 2)
    };
    let mut out = vec![Complex::new(0.0, 0.0); data.len()];
    for y in 0..height {
        let ty = (y + sy) % height;
        for x in 0..width {
            let tx = (x + sx) % width;
            out[ty * width + tx] = data[y * width + x];
        }
    }
    out
}

/// Forward transform to a DC-centered spectrum.
pub fn fft_forward(image: &GrayImage) -> Spectrum {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let mut data: Vec<Complex<f64>> = image
        .data()
        .iter()
        .map(|&p| Complex::new(p as f64, 0.0))
        .collect();
    fft_2d(&mut data, w, h, false);
    Spectrum {
        width: image.width(),
        height: image.height(),
        data: shift_dc(&data, w, h, false),
    }
}

/// Inverse transform; real part, before any clamping.
pub fn fft_inverse_real(spectrum: &Spectrum) -> Vec<f64> {
    let (w, h) = (spectrum.width as usize, spectrum.height as usize);
    let mut data = shift_dc(&spectrum.data, w, h, true);
    fft_2d(&mut data, w, h, true);
    data.into_iter().map(|c| c.re).collect()
}

/// Inverse transform to an 8-bit image, clamped to [0, 255].
pub fn fft_inverse(spectrum: &Spectrum) -> GrayImage {
    let real = fft_inverse_real(spectrum);
    GrayImage::from_f64_clamped(spectrum.width, spectrum.height, &real)
        .expect("spectrum dimensions are valid image dimensions")
}

/// Gaussian gain `exp(−r²/2σ²)` around the DC-center bin; peak 1 at DC.
pub fn gen_gauss_filter(sigma: f64, width: u32, height: u32) -> Result<FrequencyFilter> {
    if sigma <= 0.0 {
        return Err(Error::InvalidArgument("sigma must be > 0".into()));
    }
    let (w, h) = (width as usize, height as usize);
    let (uc, vc) = ((width / 2) as f64, (height / 2) as f64);
    let mut data = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let r2 = (x as f64 - uc).powi(2) + (y as f64 - vc).powi(2);
            data[y * w + x] = (-r2 / (2.0 * sigma * sigma)).exp();
        }
    }
    Ok(FrequencyFilter {
        width,
        height,
        data,
    })
}

/// Difference-of-Gaussians band-pass: `gauss(σ_wide) − gauss(σ_narrow)`.
/// Zero gain at DC, vanishing at high frequency, positive in a mid band.
pub fn band_pass_filter(
    sigma_narrow: f64,
    sigma_wide: f64,
    width: u32,
    height: u32,
) -> Result<FrequencyFilter> {
    if !(sigma_narrow > 0.0 && sigma_narrow < sigma_wide) {
        return Err(Error::InvalidArgument(
            "need 0 < sigma_narrow < sigma_wide".into(),
        ));
    }
    let wide = gen_gauss_filter(sigma_wide, width, height)?;
    let narrow = gen_gauss_filter(sigma_narrow, width, height)?;
    let data = wide
        .data
        .iter()
        .zip(&narrow.data)
        .map(|(w, n)| w - n)
        .collect();
    Ok(FrequencyFilter {
        width,
        height,
        data,
    })
}

/// Band-pass response of an image before rescaling: the real inverse of the
/// filtered spectrum. Mean is 0 (the filter has zero DC gain).
pub fn band_pass_response(
    image: &GrayImage,
    sigma_narrow: f64,
    sigma_wide: f64,
) -> Result<Vec<f64>> {
    let mut spectrum = fft_forward(image);
    let filter = band_pass_filter(sigma_narrow, sigma_wide, image.width(), image.height())?;
    for (s, g) in spectrum.data.iter_mut().zip(&filter.data) {
        *s *= *g;
    }
    Ok(fft_inverse_real(&spectrum))
}

/// Band-pass enhancement with per-frame rescaling of the response to
/// [0, 255]. A flat response maps to all zeros.
pub fn enhance_with(image: &GrayImage, sigma_narrow: f64, sigma_wide: f64) -> Result<GrayImage> {
    let response = band_pass_response(image, sigma_narrow, sigma_wide)?;
    let min = response.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = response.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let rescaled: Vec<f64> = if span < 1e-9 {
        vec![0.0; response.len()]
    } else {
        response
            .iter()
            .map(|&v| (v - min) / span * 255.0)
            .collect()
    };
    GrayImage::from_f64_clamped(image.width(), image.height(), &rescaled)
}

/// [`enhance_with`] at the default sigmas (3, 15).
pub fn enhance(image: &GrayImage) -> GrayImage {
    enhance_with(image, SIGMA_NARROW_DEFAULT, SIGMA_WIDE_DEFAULT)
        .expect("default sigmas are valid")
}

/// Log-magnitude of a spectrum as an inspectable 8-bit image.
pub fn spectrum_log_magnitude(spectrum: &Spectrum) -> GrayImage {
    let logs: Vec<f64> = spectrum.data.iter().map(|c| (1.0 + c.norm()).ln()).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = if max <= 0.0 {
        vec![0.0; logs.len()]
    } else {
        logs.iter().map(|&v| v / max * 255.0).collect()
    };
    GrayImage::from_f64_clamped(spectrum.width, spectrum.height, &scaled)
        .expect("spectrum dimensions are valid image dimensions")
}

/// Exports a frequency filter as a viewable 8-bit image. Gains are mapped
/// through the byte-display convention `128 + 127·gain` so that negative
/// lobes stay visible; this offset exists only for display.
pub fn filter_to_image(filter: &FrequencyFilter) -> GrayImage {
    let vals: Vec<f64> = filter.data.iter().map(|&g| 128.0 + 127.0 * g).collect();
    GrayImage::from_f64_clamped(filter.width, filter.height, &vals)
        .expect("filter dimensions are valid image dimensions")
}
