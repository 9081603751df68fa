//! Image-quality metrics: PSNR, SSIM, and their high-frequency variants.
//!
//! The high-frequency variants evaluate the metric on high-pass residuals
//! (image minus its Gaussian blur), which weighs fine detail such as cloth
//! patterns and wrinkles far more than flat shading. Gray and RGB images are
//! supported; RGB metrics are computed per channel and averaged.

use crate::error::{Error, Result};

/// Mean squared errors at or below this floor count as an exact match and
/// produce the +∞ sentinel (floating-point convolution leaves residual dust
/// around 1e-30 even for mathematically identical inputs).
pub const MSE_ZERO_FLOOR: f64 = 1e-24;

/// SSIM stabilization constants for dynamic range L = 1.
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Raster with values in [0, 1]; 1 or 3 channels, interleaved row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("image dimensions must be nonzero".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "images must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidInput(format!(
                "image data has {} values, expected {}",
                data.len(),
                width * height * channels
            )));
        }
        if !data.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput(
                "image values must lie in [0, 1]".into(),
            ));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn plane(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    fn same_shape(&self, other: &Image) -> Result<()> {
        if self.width != other.width
            || self.height != other.height
            || self.channels != other.channels
        {
            return Err(Error::InvalidInput(format!(
                "image shapes disagree: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )));
        }
        Ok(())
    }
}

/// High-pass residual; values are signed and unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64 * i as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Index reflected at the borders (edge pixel repeated).
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian blur of a single plane.
fn blur_plane(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as i64;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (ki, w) in kernel.iter().enumerate() {
                let sx = reflect(x as i64 + ki as i64 - radius, width);
                acc += w * plane[y * width + sx];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (ki, w) in kernel.iter().enumerate() {
                let sy = reflect(y as i64 + ki as i64 - radius, height);
                acc += w * tmp[sy * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// img − gaussian_blur(img, sigma), kernel radius ⌈3σ⌉, reflected borders.
pub fn highpass(img: &Image, sigma: f64) -> Residual {
    assert!(sigma > 0.0, "sigma must be positive");
    let kernel = gaussian_kernel(sigma);
    let mut data = vec![0.0; img.data.len()];
    for c in 0..img.channels {
        let plane = img.plane(c);
        let blurred = blur_plane(&plane, img.width, img.height, &kernel);
        for (i, (p, b)) in plane.iter().zip(&blurred).enumerate() {
            data[i * img.channels + c] = p - b;
        }
    }
    Residual {
        width: img.width,
        height: img.height,
        channels: img.channels,
        data,
    }
}

/// Mean local SSIM: 11×11 Gaussian window (σ = 1.5), C1 = (0.01·L)²,
/// C2 = (0.03·L)², dynamic range L = 1, channels averaged.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.same_shape(b)?;
    let kernel = ssim_window();
    let mut total = 0.0;
    for c in 0..a.channels {
        total += ssim_plane(&a.plane(c), &b.plane(c), a.width, a.height, &kernel);
    }
    Ok(total / a.channels as f64)
}

/// 11-tap Gaussian window with σ = 1.5 (not the ⌈3σ⌉ rule; the 11×11 window
/// is part of the metric's definition).
fn ssim_window() -> Vec<f64> {
    let sigma = 1.5;
    let mut k: Vec<f64> = (-5..=5)
        .map(|i| (-(i as f64 * i as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

fn ssim_plane(a: &[f64], b: &[f64], width: usize, height: usize, kernel: &[f64]) -> f64 {
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let a2: Vec<f64> = a.iter().map(|x| x * x).collect();
    let b2: Vec<f64> = b.iter().map(|x| x * x).collect();
    let mu_a = blur_plane(a, width, height, kernel);
    let mu_b = blur_plane(b, width, height, kernel);
    let m_ab = blur_plane(&prod, width, height, kernel);
    let m_a2 = blur_plane(&a2, width, height, kernel);
    let m_b2 = blur_plane(&b2, width, height, kernel);
    let mut acc = 0.0;
    for i in 0..a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = m_a2[i] - ma * ma;
        let var_b = m_b2[i] - mb * mb;
        let cov = m_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
        let den = (ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2);
        acc += num / den;
    }
    acc / a.len() as f64
}

fn psnr_from_mse(mse: f64, l: f64) -> f64 {
    if mse <= MSE_ZERO_FLOOR {
        f64::INFINITY
    } else {
        10.0 * ((l * l) / mse).log10()
    }
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// 10·log10(L²/MSE) with L = 1; identical images give the +∞ sentinel.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.same_shape(b)?;
    Ok(psnr_from_mse(mse(&a.data, &b.data), 1.0))
}

/// Residuals are shifted by +0.5 and clamped to [0, 1] before SSIM so the
/// stabilization constants keep their usual meaning on signed data.
fn residual_to_image(r: &Residual) -> Image {
    Image {
        width: r.width,
        height: r.height,
        channels: r.channels,
        data: r.data.iter().map(|v| (v + 0.5).clamp(0.0, 1.0)).collect(),
    }
}

/// SSIM over high-pass residuals of both images.
pub fn hf_ssim(gt: &Image, pred: &Image, sigma: f64) -> Result<f64> {
    gt.same_shape(pred)?;
    let rg = residual_to_image(&highpass(gt, sigma));
    let rp = residual_to_image(&highpass(pred, sigma));
    ssim(&rg, &rp)
}

/// PSNR over high-pass residuals of both images (L = 1).
pub fn hf_psnr(gt: &Image, pred: &Image, sigma: f64) -> Result<f64> {
    gt.same_shape(pred)?;
    let rg = highpass(gt, sigma);
    let rp = highpass(pred, sigma);
    Ok(psnr_from_mse(mse(&rg.data, &rp.data), 1.0))
}

/// Default high-pass filter width (pixels) for the HF metrics.
pub const DEFAULT_HF_SIGMA: f64 = 5.0;
