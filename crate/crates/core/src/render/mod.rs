//! Orthographic ray casting, volume compositing against the body mesh, and mesh rasterization.

mod bvh;
mod camera;
mod composite;
mod image_io;
mod raster;
mod sampling;

pub use bvh::{intersect_brute_force, intersect_triangle, Bvh, Hit};
pub use camera::{Camera, CameraGrad, Ray};
pub use composite::{composite, composite_backward, Composite, CompositeGrad};
pub use image_io::{Image, Mask};
pub use raster::{contour_edges, plan_raster, rasterize_backward, rasterize_mesh, rasterize_with, Raster, RasterGrad, RasterPlan};
pub use sampling::{importance_resample, merge_depths, stratified_samples, Midpoint, Uniform};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::math::Vec3;
use crate::{Error, Result};

/// Color seen where a ray leaves the volume without hitting the body.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Background {
    #[default]
    Black,
    /// the radiance of the final sample
    FarSample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub near: f64,
    pub far: f64,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub background: Background,
    /// soft-silhouette temperature in pixels
    pub tau_soft: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { near: -0.6, far: 0.6, n_coarse: 64, n_fine: 32, background: Background::Black, tau_soft: 2.0 }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.near < self.far) || self.n_coarse < 2 || !(self.tau_soft > 0.0) {
            return Err(Error::invalid("render config needs near < far, at least two coarse samples and positive tau_soft"));
        }
        Ok(())
    }
}

/// Radiance and density at observation-space points.
pub trait VolumeField: Sync {
    fn eval(&self, x: &Vec3, fine: bool) -> (Vec3, f64);
}

/// Empty volume.
pub struct Transparent;

impl VolumeField for Transparent {
    fn eval(&self, _x: &Vec3, _fine: bool) -> (Vec3, f64) {
        (Vec3::new(0.5, 0.5, 0.5), 0.0)
    }
}

/// Spherical shell of constant density and color.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShellField {
    pub center: Vec3,
    pub radius: f64,
    pub thickness: f64,
    pub density: f64,
    pub color: Vec3,
}

impl Default for ShellField {
    fn default() -> Self {
        Self { center: Vec3::zeros(), radius: 0.3, thickness: 0.05, density: 50.0, color: Vec3::new(1.0, 0.0, 0.0) }
    }
}

impl ShellField {
    fn chord(&self, ray: &Ray, r: f64, t0: f64, t1: f64) -> f64 {
        let oc = ray.origin - self.center;
        let b = oc.dot(&ray.direction);
        let disc = b * b - (oc.norm_squared() - r * r);
        if disc <= 0.0 {
            return 0.0;
        }
        let s = disc.sqrt();
        ((-b + s).min(t1) - (-b - s).max(t0)).max(0.0)
    }

    /// Exact integral of density along `ray` over `[t0, t1]`.
    pub fn optical_depth(&self, ray: &Ray, t0: f64, t1: f64) -> f64 {
        let outer = self.chord(ray, self.radius + self.thickness / 2.0, t0, t1);
        let inner = self.chord(ray, self.radius - self.thickness / 2.0, t0, t1);
        self.density * (outer - inner)
    }
}

impl VolumeField for ShellField {
    fn eval(&self, x: &Vec3, _fine: bool) -> (Vec3, f64) {
        let r = (x - self.center).norm();
        if (r - self.radius).abs() <= self.thickness / 2.0 {
            (self.color, self.density)
        } else {
            (self.color, 0.0)
        }
    }
}

/// Deterministic generator for one ray of one render pass.
pub fn ray_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn surface_color(hit: &Hit, faces: &[[usize; 3]], colors: &[Vec3]) -> Vec3 {
    let f = faces[hit.face];
    colors[f[0]] * hit.bary[0] + colors[f[1]] * hit.bary[1] + colors[f[2]] * hit.bary[2]
}

#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub depths: Vec<f64>,
    pub colors: Vec<Vec3>,
    pub densities: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RayResult {
    pub color: Vec3,
    pub mask: f64,
    pub hit: Option<Hit>,
    pub coarse: RaySamples,
    pub fine: Option<RaySamples>,
}

fn eval_samples(field: &dyn VolumeField, ray: &Ray, depths: Vec<f64>, fine: bool) -> RaySamples {
    let (colors, densities) = depths.iter().map(|t| field.eval(&ray.at(*t), fine)).unzip();
    RaySamples { depths, colors, densities }
}

fn end_color(samples: &RaySamples, hit: Option<&Hit>, surface: Option<Vec3>, background: Background) -> Vec3 {
    match (hit, surface) {
        (Some(_), Some(c)) => c,
        _ => match background {
            Background::Black => Vec3::zeros(),
            Background::FarSample => *samples.colors.last().unwrap(),
        },
    }
}

/// Renders one ray: surface hit, stratified coarse samples, importance-resampled fine
/// samples, compositing onto the surface color.
pub fn render_ray<U: Uniform + ?Sized>(field: &dyn VolumeField, bvh: &Bvh, vertex_colors: &[Vec3], ray: &Ray, cfg: &RenderConfig, rng: &mut U) -> Result<RayResult> {
    let hit = bvh.intersect(ray);
    let far = hit.map_or(ray.far, |h| h.t);
    let surface = hit.map(|h| surface_color(&h, bvh.faces(), vertex_colors));
    let coarse = eval_samples(field, ray, stratified_samples(ray.near, far, cfg.n_coarse, hit.is_some(), rng), false);
    let end = end_color(&coarse, hit.as_ref(), surface, cfg.background);
    let c = composite(&coarse.depths, &coarse.colors, &coarse.densities, &end)?;
    if cfg.n_fine == 0 {
        return Ok(RayResult { color: c.color, mask: c.mask(), hit, coarse, fine: None });
    }
    let extra = importance_resample(&coarse.depths, &c.alpha, cfg.n_fine, rng);
    let fine = eval_samples(field, ray, merge_depths(&coarse.depths, &extra), true);
    let end = end_color(&fine, hit.as_ref(), surface, cfg.background);
    let f = composite(&fine.depths, &fine.colors, &fine.densities, &end)?;
    Ok(RayResult { color: f.color, mask: f.mask(), hit, coarse, fine: Some(fine) })
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub image: Image,
    pub mask: Mask,
    pub hits: Vec<Option<Hit>>,
}

/// Renders every pixel; pixel `p` draws from stream `p` of `seed`.
pub fn render_image(
    field: &dyn VolumeField,
    bvh: &Bvh,
    vertex_colors: &[Vec3],
    camera: &Camera,
    width: usize,
    height: usize,
    cfg: &RenderConfig,
    seed: u64,
) -> Result<RenderOutput> {
    cfg.validate()?;
    camera.validate()?;
    let rays: Vec<RayResult> = (0..width * height)
        .into_par_iter()
        .map(|p| {
            let ray = camera.generate_ray(p % width, p / width, width, height, cfg.near, cfg.far);
            render_ray(field, bvh, vertex_colors, &ray, cfg, &mut ray_rng(seed, p as u64))
        })
        .collect::<Result<_>>()?;
    Ok(RenderOutput {
        image: Image::from_pixels(width, height, rays.iter().map(|r| r.color).collect())?,
        mask: Mask::from_values(width, height, rays.iter().map(|r| r.mask).collect())?,
        hits: rays.iter().map(|r| r.hit).collect(),
    })
}

#[cfg(test)]
mod tests;
