use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::math::Vec3;
use crate::Result;

/// Linear RGB image with channels in `[0, 1]`, row-major from the top-left.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Vec3>,
}

/// Single-channel image in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, pixels: vec![Vec3::zeros(); width * height] }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<Vec3>) -> Result<Self> {
        crate::error::check_dim("image pixels", width * height, pixels.len())?;
        Ok(Self { width, height, pixels })
    }

    pub fn get(&self, u: usize, v: usize) -> Vec3 {
        self.pixels[v * self.width + u]
    }

    /// 8-bit PNG, or 16-bit binary PPM when the extension is `.ppm`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let is_ppm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
        if is_ppm {
            let mut buf: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::new(self.width as u32, self.height as u32);
            for (p, px) in buf.pixels_mut().zip(&self.pixels) {
                *p = Rgb([0, 1, 2].map(|c| quantize(px[c], 65535.0) as u16));
            }
            buf.save(path)?;
        } else {
            let mut buf = RgbImage::new(self.width as u32, self.height as u32);
            for (p, px) in buf.pixels_mut().zip(&self.pixels) {
                *p = Rgb([0, 1, 2].map(|c| quantize(px[c], 255.0) as u8));
            }
            buf.save(path)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let rgb = img.into_rgb16();
        let pixels = rgb.pixels().map(|p| Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64) / 65535.0).collect();
        Ok(Self { width: w, height: h, pixels })
    }
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![0.0; width * height] }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        crate::error::check_dim("mask values", width * height, values.len())?;
        Ok(Self { width, height, values })
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0 || *v == 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = GrayImage::new(self.width as u32, self.height as u32);
        for (p, v) in buf.pixels_mut().zip(&self.values) {
            *p = Luma([quantize(*v, 255.0) as u8]);
        }
        buf.save(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)?.into_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let values = img.pixels().map(|p| p[0] as f64 / 255.0).collect();
        Ok(Self { width: w, height: h, values })
    }

    /// Reads a mask and thresholds it at one half.
    pub fn load_binary(path: &Path) -> Result<Self> {
        let mut m = Self::load(path)?;
        m.values.iter_mut().for_each(|v| *v = if *v >= 0.5 { 1.0 } else { 0.0 });
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image() -> Image {
        let px = (0..12).map(|i| Vec3::new(i as f64 / 11.0, 1.0 - i as f64 / 11.0, 0.5)).collect();
        Image::from_pixels(4, 3, px).unwrap()
    }

    #[test]
    fn png_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = gradient_image();
        let path = dir.path().join("a.png");
        img.save(&path).unwrap();
        let back = Image::load(&path).unwrap();
        assert_eq!((back.width, back.height), (4, 3));
        assert!(img.pixels.iter().zip(&back.pixels).all(|(a, b)| (a - b).amax() <= 0.5 / 255.0 + 1e-12));
    }

    #[test]
    fn ppm_keeps_sixteen_bits() {
        let dir = tempfile::tempdir().unwrap();
        let img = gradient_image();
        let path = dir.path().join("a.ppm");
        img.save(&path).unwrap();
        let back = Image::load(&path).unwrap();
        assert!(img.pixels.iter().zip(&back.pixels).all(|(a, b)| (a - b).amax() <= 0.5 / 65535.0 + 1e-12));
    }

    #[test]
    fn binary_mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Mask::from_values(3, 2, vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let path = dir.path().join("m.png");
        m.save(&path).unwrap();
        assert_eq!(Mask::load_binary(&path).unwrap(), m);
        let raw = image::open(&path).unwrap().into_luma8();
        assert_eq!(raw.get_pixel(1, 0)[0], 255);
    }

    #[test]
    fn wrong_pixel_count_is_rejected() {
        assert!(Image::from_pixels(2, 2, vec![Vec3::zeros(); 3]).is_err());
    }
}
