//! Two-stage fitting of the hybrid avatar and the operations on fitted avatars.

mod adam;
mod fit;
mod objective;
mod scene;


pub use adam::{Adam, AdamConfig};
pub use fit::{fit_stage, fit_stage1, fit_stage2, sample_pixels, IterationLog};
pub use objective::{evaluate_frame, evaluate_frame_with_offsets, EvalOptions, FrameGrads, FramePlan, Stage};
pub use scene::{repose, reshape, transfer_clothing, AvatarScene};

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::body_model::BodyModelAsset;
use crate::canonical::{CanonicalBody, CanonicalConfig};
use crate::fields::{FieldId, FieldSet, FieldsConfig};
use crate::losses::LossWeights;
use crate::render::{Camera, RenderConfig};
use crate::{Error, Result};

/// Per-frame pose, expression and camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePose {
    pub theta: Vec<f64>,
    pub psi: Vec<f64>,
    pub camera: Camera,
}

impl FramePose {
    fn flat(&self) -> Vec<f64> {
        let mut v = self.theta.clone();
        v.extend([self.camera.s, self.camera.t[0], self.camera.t[1]]);
        v
    }

    fn set_flat(&mut self, v: &[f64]) {
        let n = self.theta.len();
        self.theta.copy_from_slice(&v[..n]);
        self.camera.s = v[n];
        self.camera.t = [v[n + 1], v[n + 2]];
    }
}

/// Adam moments for every parameter group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub fields: Vec<Adam>,
    pub beta: Adam,
    pub frames: Vec<Adam>,
}

/// Everything optimized for one subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvatarState {
    pub asset: BodyModelAsset,
    pub canonical: CanonicalConfig,
    pub beta: Vec<f64>,
    pub fields: FieldSet,
    pub frames: Vec<FramePose>,
    pub optimizer: OptimizerState,
    pub iteration: usize,
}

const MAGIC: &[u8; 8] = b"HAVATAR\0";
const CHECKPOINT_VERSION: u32 = 1;

impl AvatarState {
    pub fn new(asset: BodyModelAsset, canonical: CanonicalConfig, fields: FieldSet, beta: Vec<f64>, frames: Vec<FramePose>) -> Result<Self> {
        asset.validate()?;
        canonical.validate(&asset)?;
        crate::error::check_dim("shape coefficients", asset.n_shape, beta.len())?;
        for f in &frames {
            crate::error::check_dim("frame pose", asset.pose_dim(), f.theta.len())?;
            crate::error::check_dim("frame expression", asset.n_expression, f.psi.len())?;
            f.camera.validate()?;
        }
        let optimizer = OptimizerState {
            fields: FieldId::ALL.iter().map(|id| Adam::new(fields.get(*id).n_params())).collect(),
            beta: Adam::new(beta.len()),
            frames: frames.iter().map(|f| Adam::new(f.theta.len() + 3)).collect(),
        };
        Ok(Self { asset, canonical, beta, fields, frames, optimizer, iteration: 0 })
    }

    /// Fresh fields with the given initial body parameters.
    pub fn initialize(asset: BodyModelAsset, fields_cfg: &FieldsConfig, canonical: Option<CanonicalConfig>, beta: Vec<f64>, frames: Vec<FramePose>, seed: u64) -> Result<Self> {
        let canonical = canonical.unwrap_or_else(|| CanonicalConfig::for_asset(&asset));
        let fields = FieldSet::new(fields_cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
        Self::new(asset, canonical, fields, beta, frames)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = MAGIC.to_vec();
        out.extend(CHECKPOINT_VERSION.to_le_bytes());
        out.extend(bincode::serialize(self)?);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not an avatar checkpoint".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let state: Self = bincode::deserialize(&bytes[12..])?;
        state.asset.validate()?;
        Ok(state)
    }

    /// Writes through a temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes()?)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn all_finite(&self) -> bool {
        self.fields.all_finite()
            && self.beta.iter().all(|v| v.is_finite())
            && self.frames.iter().all(|f| f.flat().iter().all(|v| v.is_finite()))
    }
}

/// Quantities derived once from the asset and canonical pose.
#[derive(Clone, Debug)]
pub struct BodyContext {
    pub asset: Arc<BodyModelAsset>,
    pub canonical: Arc<CanonicalBody>,
    pub edges: Vec<[usize; 2]>,
    pub sigma: f64,
    pub k: usize,
}

impl BodyContext {
    pub fn new(asset: &BodyModelAsset, cfg: &CanonicalConfig) -> Result<Self> {
        cfg.validate(asset)?;
        Ok(Self {
            asset: Arc::new(asset.clone()),
            canonical: Arc::new(CanonicalBody::new(asset, cfg)?),
            edges: asset.edges(),
            sigma: cfg.sigma,
            k: cfg.k,
        })
    }
}

/// Learning rate of each parameter group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub radiance: f64,
    pub deformation: f64,
    pub offset: f64,
    pub texture: f64,
    pub shape: f64,
    pub pose: f64,
}

impl GroupRates {
    pub fn uniform(lr: f64) -> Self {
        Self { radiance: lr, deformation: lr, offset: lr, texture: lr, shape: lr, pose: lr }
    }

    pub fn field(&self, id: FieldId) -> f64 {
        match id {
            FieldId::Coarse | FieldId::Fine => self.radiance,
            FieldId::Deformation => self.deformation,
            FieldId::Offset => self.offset,
            FieldId::Texture => self.texture,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.radiance, self.deformation, self.offset, self.texture, self.shape, self.pose];
        if all.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::invalid("learning rates must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub iterations: usize,
    pub rates: GroupRates,
}

/// How training rays are chosen each iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RaySampling {
    Uniform,
    /// uniform within the clothed-body mask's bounding box grown by `dilate` pixels
    MaskBox { dilate: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub stage1: StageSchedule,
    pub stage2: StageSchedule,
    pub rays_per_iteration: usize,
    pub frames_per_batch: usize,
    pub seed: u64,
    pub clip_norm: f64,
    pub checkpoint_every: usize,
    pub adam: AdamConfig,
    pub ray_sampling: RaySampling,
}

impl ScheduleConfig {
    /// The published schedule: 100k stage-1 iterations at 5e-4, then 50k at 1e-4 for the
    /// radiance and deformation fields and pose, 1e-5 for texture, offsets and shape.
    pub fn full() -> Self {
        Self {
            stage1: StageSchedule { iterations: 100_000, rates: GroupRates { deformation: 0.0, ..GroupRates::uniform(5e-4) } },
            stage2: StageSchedule {
                iterations: 50_000,
                rates: GroupRates { radiance: 1e-4, deformation: 1e-4, offset: 1e-5, texture: 1e-5, shape: 1e-5, pose: 1e-4 },
            },
            rays_per_iteration: 1024,
            frames_per_batch: 1,
            seed: 0,
            clip_norm: 10.0,
            checkpoint_every: 500,
            adam: AdamConfig::default(),
            ray_sampling: RaySampling::Uniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stage1.rates.validate()?;
        self.stage2.rates.validate()?;
        if self.rays_per_iteration == 0 || self.frames_per_batch == 0 || !(self.clip_norm > 0.0) {
            return Err(Error::invalid("schedule needs rays, frames per batch and a positive clip norm"));
        }
        Ok(())
    }
}

/// Switches that disable parts of the method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    pub pose_refinement: bool,
    pub deformation: bool,
    pub mrf: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self { pose_refinement: true, deformation: true, mrf: true }
    }
}

/// Complete description of a fitting run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schedule: ScheduleConfig,
    pub weights: LossWeights,
    pub render: RenderConfig,
    pub fields: FieldsConfig,
    pub sigma: f64,
    pub k: usize,
    #[serde(default)]
    pub ablation: Ablation,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleConfig::full(),
            weights: LossWeights::default(),
            render: RenderConfig::default(),
            fields: FieldsConfig::default(),
            sigma: 0.1,
            k: 6,
            ablation: Ablation::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.weights.validate()?;
        self.render.validate()?;
        if !(self.sigma > 0.0) || self.k == 0 {
            return Err(Error::invalid("canonicalization needs sigma > 0 and k >= 1"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn canonical(&self, asset: &BodyModelAsset) -> CanonicalConfig {
        CanonicalConfig { sigma: self.sigma, k: self.k, ..CanonicalConfig::for_asset(asset) }
    }
}
