//! Everything around the optimization core: synthetic subjects, dataset files, metrics,
//! plots, run manifests and the command-line front end.

pub mod cli;
pub mod dataset;
pub mod metrics;
pub mod plot;
pub mod synth;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fields::{FieldArch, FieldsConfig};
use crate::math::Vec3;
use crate::pipeline::{fit_stage, AvatarScene, AvatarState, FramePose, GroupRates, IterationLog, RaySampling, RunConfig, Stage, StageSchedule};
use crate::render::{Image, Mask, RenderConfig};
use crate::Result;

pub use dataset::Dataset;
pub use metrics::{clothing_leakage, psnr, ssim, FrameMetrics, MetricsReport};
pub use synth::{generate_synthetic, AnalyticClothing, SynthSpec, SyntheticScene};

/// Small networks and sample counts for the 64x64 synthetic subject on a CPU.
pub fn benchmark_config() -> RunConfig {
    let mut cfg = RunConfig {
        fields: FieldsConfig {
            radiance: FieldArch::new(3, 48, 6),
            deformation: FieldArch::new(2, 32, 3),
            offset: FieldArch::new(2, 32, 3),
            texture: FieldArch::new(2, 32, 4),
            density_bias: 0.0,
        },
        render: RenderConfig { near: -0.35, far: 0.35, n_coarse: 16, n_fine: 16, tau_soft: 0.15, ..RenderConfig::default() },
        ..RunConfig::default()
    };
    let s = &mut cfg.schedule;
    s.stage1 = StageSchedule {
        iterations: 5000,
        rates: GroupRates { radiance: 2e-3, deformation: 0.0, offset: 1e-4, texture: 1e-3, shape: 3e-4, pose: 3e-4 },
    };
    s.stage2 = StageSchedule {
        iterations: 2000,
        rates: GroupRates { radiance: 5e-4, deformation: 5e-4, offset: 5e-5, texture: 2e-4, shape: 1e-4, pose: 1e-4 },
    };
    s.rays_per_iteration = 128;
    s.ray_sampling = RaySampling::MaskBox { dilate: 2 };
    s.checkpoint_every = 1000;
    cfg
}

/// Record of one command invocation, enough to repeat it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub config_sha256: Option<String>,
    pub config: Option<RunConfig>,
    pub inputs: Vec<InputDigest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn new(command: &str, args: Vec<String>, seed: Option<u64>, config: Option<&RunConfig>) -> Result<Self> {
        let config_sha256 = match config {
            Some(c) => Some(sha256_hex(c.to_toml()?.as_bytes())),
            None => None,
        };
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args,
            seed,
            threads: rayon::current_num_threads(),
            config_sha256,
            config: config.cloned(),
            inputs: Vec::new(),
        })
    }

    /// Adds the digest of a file input; directories are skipped.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        if path.is_file() {
            self.inputs.push(InputDigest { path: path.display().to_string(), sha256: sha256_hex(&std::fs::read(path)?) });
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Which stages a fit runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stages {
    One,
    Two,
    Both,
}

/// Result of [`fit_dataset`]; `error` holds a divergence that stopped the run early.
pub struct FitOutcome {
    pub state: AvatarState,
    pub logs: Vec<IterationLog>,
    pub error: Option<crate::Error>,
}

/// Fits the training frames of `data`. With `out`, writes `avatar.ckpt` and `log.csv` there.
pub fn fit_dataset(data: &Dataset, cfg: &RunConfig, stages: Stages, resume: Option<AvatarState>, out: Option<&Path>) -> Result<FitOutcome> {
    cfg.validate()?;
    let train = data.train_indices();
    let observations = data.observations_of(&train);
    let mut state = match resume {
        Some(s) => s,
        None => {
            let canonical = cfg.canonical(&data.asset);
            AvatarState::initialize(data.asset.clone(), &cfg.fields, Some(canonical), data.init.beta.clone(), data.init_poses_of(&train), cfg.schedule.seed)?
        }
    };
    let ckpt: Option<PathBuf> = out.map(|d| d.join("avatar.ckpt"));
    let list: &[Stage] = match stages {
        Stages::One => &[Stage::One],
        Stages::Two => &[Stage::Two],
        Stages::Both => &[Stage::One, Stage::Two],
    };
    let mut logs = Vec::new();
    let mut error = None;
    for &stage in list {
        let total = match stage {
            Stage::One => cfg.schedule.stage1.iterations,
            Stage::Two => cfg.schedule.stage2.iterations,
        };
        let report_every = (total / 20).max(1);
        let result = fit_stage(&mut state, &observations, cfg, stage, ckpt.as_deref(), |l, _| {
            if (l.iteration + 1) % report_every == 0 {
                log::info!("stage {} iteration {} loss {:.5} ({:.1} ms)", l.stage, l.iteration + 1, l.total, l.millis);
            }
            logs.push(*l);
        });
        if let Err(e) = result {
            error = Some(e);
            break;
        }
    }
    if let Some(dir) = out {
        IterationLog::write_csv(&dir.join("log.csv"), &logs)?;
        state.save(&dir.join("avatar.ckpt"))?;
    }
    Ok(FitOutcome { state, logs, error })
}

/// Rendered frame with its clothing opacity.
pub struct Rendered {
    pub frame: usize,
    pub split: &'static str,
    pub image: Image,
    pub clothing: Mask,
}

/// Pose used to render dataset frame `index`: the refined pose for training frames, the
/// reference pose for held-out frames.
pub fn eval_pose(data: &Dataset, state: &AvatarState, index: usize) -> FramePose {
    let train = data.train_indices();
    match train.iter().position(|&t| t == index) {
        Some(slot) if slot < state.frames.len() => state.frames[slot].clone(),
        _ => data.reference_pose(index).clone(),
    }
}

/// Renders the selected frames and scores them against the dataset images.
pub fn evaluate(data: &Dataset, state: &AvatarState, render: &RenderConfig, frames: &[usize], seed: u64) -> Result<(MetricsReport, Vec<Rendered>)> {
    let mut report = MetricsReport::default();
    let mut renders = Vec::with_capacity(frames.len());
    let [w, h] = data.scene.size;
    for &i in frames {
        let pose = eval_pose(data, state, i);
        let scene = AvatarScene::new(state, &state.beta, &pose.theta, &pose.psi)?;
        let out = scene.render(&pose.camera, w, h, render, seed ^ i as u64)?;
        let split = if data.scene.frames[i].test { "test" } else { "train" };
        let obs = &data.observations[i];
        report.push(i, split, &out.image, &out.mask, &obs.image, &obs.clothing)?;
        renders.push(Rendered { frame: i, split, image: out.image, clothing: out.mask });
    }
    Ok((report, renders))
}

/// Rotation of the global orientation about the vertical axis, for novel views.
pub fn turn(theta: &[f64], yaw: f64) -> Vec<f64> {
    let r = nalgebra::Rotation3::new(Vec3::y() * yaw) * nalgebra::Rotation3::new(Vec3::new(theta[0], theta[1], theta[2]));
    let v = r.scaled_axis();
    let mut out = theta.to_vec();
    out[..3].copy_from_slice(v.as_slice());
    out
}
