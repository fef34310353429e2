//! Procedurally generated subject: the toy body wearing analytic garments, filmed in a
//! scripted arm and leg swing.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::body_model::{pose_body, toy_body, BodyModelAsset, BodyParams};
use crate::canonical::{CanonicalBody, CanonicalConfig, CanonicalFrame};
use crate::losses::FrameObservation;
use crate::math::Vec3;
use crate::pipeline::FramePose;
use crate::render::{render_image, Bvh, Camera, Mask, Ray, RenderConfig, VolumeField};
use crate::{Error, Result};

/// Hollow vertical cylinder of constant density, clipped to a height range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Garment {
    /// axis position in the x-z plane
    pub axis: [f64; 2],
    pub heights: [f64; 2],
    pub inner: f64,
    pub outer: f64,
    pub density: f64,
    pub color: [f64; 3],
    /// amplitude of horizontal stripes added to the color
    pub stripes: f64,
}

impl Garment {
    fn radial(&self, p: &Vec3) -> f64 {
        ((p.x - self.axis[0]).powi(2) + (p.z - self.axis[1]).powi(2)).sqrt()
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let r = self.radial(p);
        p.y >= self.heights[0] && p.y <= self.heights[1] && r >= self.inner && r <= self.outer
    }

    pub fn color_at(&self, p: &Vec3) -> Vec3 {
        let c = Vec3::from(self.color);
        let s = self.stripes * (25.0 * p.y).sin();
        (c + Vec3::repeat(s)).map(|v| v.clamp(0.0, 1.0))
    }

    /// Parameter interval where the ray is inside the infinite cylinder of radius `r`.
    fn disc_interval(&self, ray: &Ray, r: f64) -> Option<(f64, f64)> {
        let (ox, oz) = (ray.origin.x - self.axis[0], ray.origin.z - self.axis[1]);
        let (dx, dz) = (ray.direction.x, ray.direction.z);
        let a = dx * dx + dz * dz;
        let c = ox * ox + oz * oz - r * r;
        if a == 0.0 {
            return (c <= 0.0).then_some((f64::NEG_INFINITY, f64::INFINITY));
        }
        let b = ox * dx + oz * dz;
        let disc = b * b - a * c;
        if disc <= 0.0 {
            return None;
        }
        let s = disc.sqrt();
        Some(((-b - s) / a, (-b + s) / a))
    }

    fn slab_interval(&self, ray: &Ray) -> Option<(f64, f64)> {
        let (y0, y1) = (self.heights[0], self.heights[1]);
        if ray.direction.y == 0.0 {
            return (ray.origin.y >= y0 && ray.origin.y <= y1).then_some((f64::NEG_INFINITY, f64::INFINITY));
        }
        let a = (y0 - ray.origin.y) / ray.direction.y;
        let b = (y1 - ray.origin.y) / ray.direction.y;
        Some((a.min(b), a.max(b)))
    }

    /// Exact integral of the density along `ray` over `[t0, t1]`.
    pub fn optical_depth(&self, ray: &Ray, t0: f64, t1: f64) -> f64 {
        let Some((s0, s1)) = self.slab_interval(ray) else { return 0.0 };
        let (lo, hi) = (t0.max(s0), t1.min(s1));
        if lo >= hi {
            return 0.0;
        }
        let clip = |iv: Option<(f64, f64)>| iv.map_or(0.0, |(a, b)| (b.min(hi) - a.max(lo)).max(0.0));
        let len = clip(self.disc_interval(ray, self.outer)) - clip(self.disc_interval(ray, self.inner));
        self.density * len * ray.direction.norm()
    }
}

/// Clothing defined in the canonical space of the toy body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticClothing {
    pub garments: Vec<Garment>,
}

impl AnalyticClothing {
    /// A striped shirt around the torso and shorts around the hips.
    pub fn shirt_and_shorts() -> Self {
        Self {
            garments: vec![
                Garment { axis: [0.0, 0.0], heights: [0.02, 0.5], inner: 0.1, outer: 0.2, density: 40.0, color: [0.2, 0.35, 0.75], stripes: 0.12, },
                Garment { axis: [0.0, 0.0], heights: [-0.3, 0.02], inner: 0.08, outer: 0.23, density: 40.0, color: [0.45, 0.12, 0.1], stripes: 0.0 },
            ],
        }
    }

    /// Color and density at a canonical-space point; the first garment containing it wins.
    pub fn eval(&self, p: &Vec3) -> (Vec3, f64) {
        for g in &self.garments {
            if g.contains(p) {
                return (g.color_at(p), g.density);
            }
        }
        (Vec3::zeros(), 0.0)
    }

    /// Exact optical depth of non-overlapping garments along `ray` over `[t0, t1]`.
    pub fn optical_depth(&self, ray: &Ray, t0: f64, t1: f64) -> f64 {
        self.garments.iter().map(|g| g.optical_depth(ray, t0, t1)).sum()
    }
}

/// Ground-truth clothed body in one frame: analytic clothing seen through the body's
/// canonicalization.
pub struct ClothedBody<'a> {
    pub frame: CanonicalFrame,
    pub clothing: &'a AnalyticClothing,
    pub config: &'a CanonicalConfig,
}

impl VolumeField for ClothedBody<'_> {
    fn eval(&self, x: &Vec3, _fine: bool) -> (Vec3, f64) {
        match self.frame.canonicalize(x, self.config) {
            Ok(s) => self.clothing.eval(&s.canonical),
            Err(_) => (Vec3::zeros(), 0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub frames: usize,
    pub size: usize,
    /// standard deviation in radians of the noise added to initial joint rotations
    pub pose_noise: f64,
    /// frames with `index % test_every == test_offset` are held out
    pub test_every: usize,
    pub test_offset: usize,
    pub beta: Vec<f64>,
    pub camera: Camera,
    pub render: RenderConfig,
    pub clothing: AnalyticClothing,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            frames: 25,
            size: 64,
            pose_noise: 0.05,
            test_every: 5,
            test_offset: 2,
            beta: vec![0.4, -0.3],
            camera: Camera { s: 1.05, t: [0.0, 0.0] },
            render: RenderConfig { n_coarse: 128, n_fine: 64, ..RenderConfig::default() },
            clothing: AnalyticClothing::shirt_and_shorts(),
        }
    }
}

impl SynthSpec {
    pub fn is_test(&self, index: usize) -> bool {
        self.test_every > 0 && index % self.test_every == self.test_offset
    }

    pub fn validate(&self, asset: &BodyModelAsset) -> Result<()> {
        if self.frames == 0 || self.size < 8 || !(self.pose_noise >= 0.0) {
            return Err(Error::Invalid("synthetic scene needs frames, an image size of at least 8 and non-negative noise".into()));
        }
        if self.beta.len() > asset.n_shape {
            return Err(Error::Invalid(format!("{} shape coefficients for an asset with {}", self.beta.len(), asset.n_shape)));
        }
        self.camera.validate()?;
        self.render.validate()
    }
}

/// Scripted pose of frame `i` of `n`: arms and legs swing in the image plane.
pub fn scripted_pose(asset: &BodyModelAsset, i: usize, n: usize) -> Vec<f64> {
    let phase = std::f64::consts::TAU * i as f64 / n as f64;
    let mut theta = vec![0.0; asset.pose_dim()];
    let mut set = |name: &str, axis: usize, v: f64| {
        if let Some(k) = asset.joint_index(name) {
            theta[3 * k + axis] = v;
        }
    };
    set("l_shoulder", 2, 0.55 + 0.4 * phase.sin());
    set("r_shoulder", 2, -0.55 - 0.4 * (phase + 0.7).sin());
    set("l_hip", 2, 0.12 + 0.1 * phase.cos());
    set("r_hip", 2, -0.12 + 0.1 * (phase + 1.3).cos());
    set("spine", 2, 0.08 * phase.sin());
    set("pelvis", 1, 0.15 * phase.cos());
    theta
}

fn body_colors(asset: &BodyModelAsset) -> Vec<Vec3> {
    let skin = Vec3::new(0.87, 0.66, 0.52);
    asset
        .template
        .iter()
        .map(|t| {
            if t[1] > 0.72 {
                Vec3::new(0.25, 0.17, 0.1)
            } else {
                skin * (0.92 + 0.08 * (6.0 * t[1]).cos())
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub index: usize,
    pub test: bool,
    pub truth: FramePose,
    pub init: FramePose,
}

/// A generated subject with rendered observations.
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub spec: SynthSpec,
    pub seed: u64,
    pub asset: BodyModelAsset,
    pub beta: Vec<f64>,
    pub frames: Vec<FrameTruth>,
    pub observations: Vec<FrameObservation>,
}

impl SyntheticScene {
    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.frames.len()).filter(|&i| !self.frames[i].test).collect()
    }

    pub fn test_indices(&self) -> Vec<usize> {
        (0..self.frames.len()).filter(|&i| self.frames[i].test).collect()
    }
}

/// Renders the ground-truth clothed body for `theta` and returns the image with the
/// clothed-body, clothing and visible-body masks.
pub fn render_truth(
    asset: &BodyModelAsset,
    canonical: &Arc<CanonicalBody>,
    cfg: &CanonicalConfig,
    clothing: &AnalyticClothing,
    beta: &[f64],
    theta: &[f64],
    camera: &Camera,
    size: usize,
    render: &RenderConfig,
    seed: u64,
) -> Result<FrameObservation> {
    let mut params = BodyParams::with_pose(asset, theta);
    params.beta[..beta.len()].copy_from_slice(beta);
    let posed = pose_body(&params, asset)?;
    let frame = CanonicalFrame::new(Arc::new(asset.clone()), canonical.clone(), &posed)?;
    let bvh = Bvh::build(&posed.vertices, &asset.faces);
    let colors = body_colors(asset);
    let field = ClothedBody { frame, clothing, config: cfg };
    let out = render_image(&field, &bvh, &colors, camera, size, size, render, seed)?;
    let clothing_mask: Vec<f64> = out.mask.values.iter().map(|m| if *m > 0.5 { 1.0 } else { 0.0 }).collect();
    let mask: Vec<f64> = clothing_mask.iter().zip(&out.hits).map(|(c, h)| if *c > 0.0 || h.is_some() { 1.0 } else { 0.0 }).collect();
    let body: Vec<f64> = mask.iter().zip(&clothing_mask).map(|(m, c)| m - c).collect();
    let (obs, _) = FrameObservation::new(
        out.image,
        Mask::from_values(size, size, mask)?,
        Mask::from_values(size, size, clothing_mask)?,
        Mask::from_values(size, size, body)?,
    )?;
    Ok(obs)
}

/// Deterministic scene from `spec` and `seed`.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<SyntheticScene> {
    let asset = toy_body();
    spec.validate(&asset)?;
    let cfg = CanonicalConfig::for_asset(&asset);
    let canonical = Arc::new(CanonicalBody::new(&asset, &cfg)?);
    let mut beta = vec![0.0; asset.n_shape];
    beta[..spec.beta.len()].copy_from_slice(&spec.beta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.pose_noise.max(f64::MIN_POSITIVE)).map_err(|e| Error::Invalid(e.to_string()))?;
    let rotations = 3 * asset.n_joints();
    let mut frames = Vec::with_capacity(spec.frames);
    let mut observations = Vec::with_capacity(spec.frames);
    for i in 0..spec.frames {
        let theta = scripted_pose(&asset, i, spec.frames);
        let truth = FramePose { theta: theta.clone(), psi: vec![0.0; asset.n_expression], camera: spec.camera };
        let mut init = truth.clone();
        if spec.pose_noise > 0.0 {
            init.theta[..rotations].iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        }
        observations.push(render_truth(&asset, &canonical, &cfg, &spec.clothing, &beta, &theta, &spec.camera, spec.size, &spec.render, seed ^ i as u64)?);
        frames.push(FrameTruth { index: i, test: spec.is_test(i), truth, init });
    }
    Ok(SyntheticScene { spec: spec.clone(), seed, asset, beta, frames, observations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Integral of the density by locating every boundary crossing with bisection.
    fn bisected_depth(c: &AnalyticClothing, ray: &Ray, t0: f64, t1: f64) -> f64 {
        let n = 4000;
        let inside = |t: f64| c.eval(&ray.at(t)).1;
        let mut total = 0.0;
        let mut a = t0;
        let mut da = inside(a);
        for i in 1..=n {
            let b = t0 + (t1 - t0) * i as f64 / n as f64;
            let db = inside(b);
            if da == db {
                total += da * (b - a);
            } else {
                let (mut lo, mut hi) = (a, b);
                for _ in 0..80 {
                    let m = 0.5 * (lo + hi);
                    if inside(m) == da {
                        lo = m;
                    } else {
                        hi = m;
                    }
                }
                total += da * (lo - a) + db * (b - hi);
            }
            a = b;
            da = db;
        }
        total * ray.direction.norm()
    }

    #[test]
    fn optical_depth_matches_bisection_oracle() {
        let c = AnalyticClothing::shirt_and_shorts();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut nonzero = 0;
        for _ in 0..200 {
            let origin = Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.4..0.6), -0.6);
            let direction = Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), 1.0);
            let ray = Ray { origin, direction, near: 0.0, far: 1.2 };
            let exact = c.optical_depth(&ray, 0.0, 1.2);
            let oracle = bisected_depth(&c, &ray, 0.0, 1.2);
            assert!((exact - oracle).abs() < 1e-6, "{exact} vs {oracle}");
            nonzero += (exact > 0.0) as usize;
        }
        assert!(nonzero > 50);
    }

    #[test]
    fn torso_ray_depth_closed_form() {
        let c = AnalyticClothing::shirt_and_shorts();
        let ray = Ray { origin: Vec3::new(0.05, 0.3, -1.0), direction: Vec3::new(0.0, 0.0, 1.0), near: 0.0, far: 2.0 };
        let chord = |r: f64| 2.0 * (r * r - 0.05f64 * 0.05).sqrt();
        let expected = 40.0 * (chord(0.2) - chord(0.1));
        assert!((c.optical_depth(&ray, 0.0, 2.0) - expected).abs() < 1e-12);
    }

    fn small_spec(noise: f64) -> SynthSpec {
        SynthSpec { frames: 3, size: 16, pose_noise: noise, render: RenderConfig { n_coarse: 16, n_fine: 8, ..RenderConfig::default() }, ..SynthSpec::default() }
    }

    #[test]
    fn zero_noise_init_equals_truth() {
        let s = generate_synthetic(&small_spec(0.0), 1).unwrap();
        assert!(s.frames.iter().all(|f| f.init == f.truth));
    }

    #[test]
    fn noisy_init_perturbs_rotations_only() {
        let s = generate_synthetic(&small_spec(0.05), 1).unwrap();
        let n = s.asset.pose_dim();
        for f in &s.frames {
            assert_ne!(f.init.theta, f.truth.theta);
            assert_eq!(f.init.theta[n - 3..], f.truth.theta[n - 3..]);
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let a = generate_synthetic(&small_spec(0.05), 9).unwrap();
        let b = generate_synthetic(&small_spec(0.05), 9).unwrap();
        assert_eq!(a.observations, b.observations);
        assert_eq!(a.frames, b.frames);
    }

    #[test]
    fn masks_are_nested() {
        let s = generate_synthetic(&small_spec(0.0), 2).unwrap();
        for o in &s.observations {
            for p in 0..o.n_pixels() {
                assert!(o.clothing.values[p] <= o.mask.values[p]);
                assert!(o.body.values[p] <= o.mask.values[p]);
                assert_eq!(o.body.values[p] + o.clothing.values[p], o.mask.values[p]);
            }
            assert!(o.clothing.mean() > 0.05 && o.body.mean() > 0.02);
        }
    }

    #[test]
    fn split_holds_out_every_fifth_frame() {
        let spec = SynthSpec::default();
        let test: Vec<usize> = (0..25).filter(|&i| spec.is_test(i)).collect();
        assert_eq!(test, vec![2, 7, 12, 17, 22]);
    }
}
