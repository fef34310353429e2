use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::render::{Image, Mask};
use crate::{Error, Result};

/// Peak signal-to-noise ratio in dB for values in [0, 1]; `None` when the images are identical.
pub fn psnr(a: &Image, b: &Image) -> Result<Option<f64>> {
    same_size(a, b)?;
    let n = (a.pixels.len() * 3) as f64;
    let mse: f64 = a.pixels.iter().zip(&b.pixels).map(|(p, q)| (p - q).norm_squared()).sum::<f64>() / n;
    Ok((mse > 0.0).then(|| -10.0 * mse.log10()))
}

fn same_size(a: &Image, b: &Image) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::Invalid(format!("image sizes differ: {}x{} vs {}x{}", a.width, a.height, b.width, b.height)));
    }
    Ok(())
}

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn gaussian_window() -> Vec<f64> {
    let c = (WINDOW / 2) as f64;
    let w: Vec<f64> = (0..WINDOW).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SIGMA * SIGMA)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filter keeping only fully covered positions.
fn filter(values: &[f64], w: usize, h: usize, g: &[f64]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - WINDOW, h + 1 - WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|k| g[k] * values[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|k| g[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

fn ssim_channel(a: &[f64], b: &[f64], w: usize, h: usize, g: &[f64]) -> f64 {
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter(a, w, h, g);
    let mu_b = filter(b, w, h, g);
    let aa = filter(&prod(a, a), w, h, g);
    let bb = filter(&prod(b, b), w, h, g);
    let ab = filter(&prod(a, b), w, h, g);
    let n = mu_a.len();
    (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum::<f64>()
        / n as f64
}

/// Structural similarity with an 11x11 Gaussian window (sigma 1.5), averaged over the
/// three channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_size(a, b)?;
    if a.width < WINDOW || a.height < WINDOW {
        return Err(Error::Invalid(format!("SSIM needs images of at least {WINDOW}x{WINDOW}")));
    }
    let g = gaussian_window();
    let channel = |img: &Image, c: usize| -> Vec<f64> { img.pixels.iter().map(|p| p[c]).collect() };
    Ok((0..3).map(|c| ssim_channel(&channel(a, c), &channel(b, c), a.width, a.height, &g)).sum::<f64>() / 3.0)
}

/// Mean rendered clothing opacity over pixels that are not clothing in the target.
pub fn clothing_leakage(rendered: &Mask, clothing: &Mask) -> f64 {
    let outside: Vec<f64> = rendered.values.iter().zip(&clothing.values).filter(|(_, c)| **c < 0.5).map(|(r, _)| *r).collect();
    if outside.is_empty() {
        0.0
    } else {
        outside.iter().sum::<f64>() / outside.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub split: String,
    /// `inf` for identical images
    pub psnr: f64,
    pub ssim: f64,
    pub leakage: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: Vec<FrameMetrics>,
}

impl MetricsReport {
    pub fn push(&mut self, frame: usize, split: &str, rendered: &Image, rendered_clothing: &Mask, target: &Image, target_clothing: &Mask) -> Result<()> {
        self.frames.push(FrameMetrics {
            frame,
            split: split.to_string(),
            psnr: psnr(rendered, target)?.unwrap_or(f64::INFINITY),
            ssim: ssim(rendered, target)?,
            leakage: clothing_leakage(rendered_clothing, target_clothing),
        });
        Ok(())
    }

    fn mean_of(&self, split: &str, f: impl Fn(&FrameMetrics) -> f64) -> Option<f64> {
        let v: Vec<f64> = self.frames.iter().filter(|m| m.split == split).map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn mean_psnr(&self, split: &str) -> Option<f64> {
        self.mean_of(split, |m| m.psnr)
    }

    pub fn mean_ssim(&self, split: &str) -> Option<f64> {
        self.mean_of(split, |m| m.ssim)
    }

    pub fn mean_leakage(&self, split: &str) -> Option<f64> {
        self.mean_of(split, |m| m.leakage)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for f in &self.frames {
            w.serialize(f)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let frames = r.deserialize().collect::<std::result::Result<Vec<FrameMetrics>, _>>()?;
        Ok(Self { frames })
    }
}
