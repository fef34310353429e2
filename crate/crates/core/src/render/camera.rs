use serde::{Deserialize, Serialize};

use crate::math::Vec3;
use crate::{Error, Result};

/// Scaled orthographic camera: a world point maps to normalized device coordinates
/// `s * (x, y) + t`, and the NDC square `[-1, 1]^2` covers the image with y pointing up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub s: f64,
    pub t: [f64; 2],
}

/// Gradient of some scalar with respect to the camera parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CameraGrad {
    pub s: f64,
    pub t: [f64; 2],
}

impl CameraGrad {
    pub fn add(&mut self, o: &CameraGrad) {
        self.s += o.s;
        self.t[0] += o.t[0];
        self.t[1] += o.t[1];
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub near: f64,
    pub far: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

impl Camera {
    pub fn new(s: f64, t: [f64; 2]) -> Result<Self> {
        let c = Self { s, t };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0) || !self.s.is_finite() || !self.t.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("camera scale must be positive and parameters finite"));
        }
        Ok(())
    }

    /// NDC of a pixel center.
    pub fn pixel_ndc(u: usize, v: usize, width: usize, height: usize) -> [f64; 2] {
        [
            2.0 * (u as f64 + 0.5) / width as f64 - 1.0,
            1.0 - 2.0 * (v as f64 + 0.5) / height as f64,
        ]
    }

    /// World-plane coordinates seen at a pixel center.
    pub fn pixel_to_world(&self, u: usize, v: usize, width: usize, height: usize) -> [f64; 2] {
        let ndc = Self::pixel_ndc(u, v, width, height);
        [(ndc[0] - self.t[0]) / self.s, (ndc[1] - self.t[1]) / self.s]
    }

    /// Derivative of the pixel's world-plane coordinates with respect to `(s, tx, ty)`.
    pub fn pixel_to_world_grad(&self, u: usize, v: usize, width: usize, height: usize, d_xy: [f64; 2]) -> CameraGrad {
        let w = self.pixel_to_world(u, v, width, height);
        CameraGrad {
            s: -(d_xy[0] * w[0] + d_xy[1] * w[1]) / self.s,
            t: [-d_xy[0] / self.s, -d_xy[1] / self.s],
        }
    }

    pub fn generate_ray(&self, u: usize, v: usize, width: usize, height: usize, near: f64, far: f64) -> Ray {
        let [x, y] = self.pixel_to_world(u, v, width, height);
        Ray { origin: Vec3::new(x, y, 0.0), direction: Vec3::new(0.0, 0.0, 1.0), near, far }
    }

    /// Continuous pixel coordinates of a world point (pixel centers at integers).
    pub fn project(&self, p: &Vec3, width: usize, height: usize) -> [f64; 2] {
        [
            (self.s * p.x + self.t[0] + 1.0) * width as f64 / 2.0 - 0.5,
            (1.0 - self.s * p.y - self.t[1]) * height as f64 / 2.0 - 0.5,
        ]
    }

    /// World-plane coordinates at continuous pixel coordinates.
    pub fn unproject(&self, px: f64, py: f64, width: usize, height: usize) -> [f64; 2] {
        let ndc_x = 2.0 * (px + 0.5) / width as f64 - 1.0;
        let ndc_y = 1.0 - 2.0 * (py + 0.5) / height as f64;
        [(ndc_x - self.t[0]) / self.s, (ndc_y - self.t[1]) / self.s]
    }

    /// Pulls a gradient on projected pixel coordinates back to the point and the camera.
    pub fn project_backward(&self, p: &Vec3, width: usize, height: usize, d_px: [f64; 2], cam: &mut CameraGrad) -> Vec3 {
        let (hw, hh) = (width as f64 / 2.0, height as f64 / 2.0);
        cam.s += d_px[0] * p.x * hw - d_px[1] * p.y * hh;
        cam.t[0] += d_px[0] * hw;
        cam.t[1] -= d_px[1] * hh;
        Vec3::new(d_px[0] * self.s * hw, -d_px[1] * self.s * hh, 0.0)
    }
}
