//! On-disk layout of a subject:
//!
//! ```text
//! scene.json        frame list with splits, image size, generator settings
//! asset.json        body model
//! truth.json        ground-truth shape and per-frame poses (synthetic scenes only)
//! init.json         initial per-frame poses used to start fitting
//! frames/NNNN_{image,mask,clothing,body}.png
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::body_model::BodyModelAsset;
use crate::losses::FrameObservation;
use crate::pipeline::FramePose;
use crate::render::{Image, Mask};
use crate::{Error, Result};

use super::synth::{SynthSpec, SyntheticScene};

const SCENE_FORMAT: &str = "hybrid-avatar-scene";
const SCENE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub test: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub format: String,
    pub version: u32,
    pub size: [usize; 2],
    pub frames: Vec<FrameEntry>,
    pub seed: Option<u64>,
    pub generator: Option<SynthSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseFile {
    pub beta: Vec<f64>,
    pub frames: Vec<FramePose>,
}

/// A loaded subject.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub scene: SceneFile,
    pub asset: BodyModelAsset,
    pub init: PoseFile,
    pub truth: Option<PoseFile>,
    pub observations: Vec<FrameObservation>,
}

fn frame_path(root: &Path, index: usize, kind: &str) -> PathBuf {
    root.join("frames").join(format!("{index:04}_{kind}.png"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

impl SyntheticScene {
    pub fn save(&self, root: &Path) -> Result<()> {
        fs::create_dir_all(root.join("frames"))?;
        let size = self.spec.size;
        let scene = SceneFile {
            format: SCENE_FORMAT.into(),
            version: SCENE_VERSION,
            size: [size, size],
            frames: self.frames.iter().map(|f| FrameEntry { index: f.index, test: f.test }).collect(),
            seed: Some(self.seed),
            generator: Some(self.spec.clone()),
        };
        write_json(&root.join("scene.json"), &scene)?;
        self.asset.save(&root.join("asset.json"))?;
        write_json(&root.join("truth.json"), &PoseFile { beta: self.beta.clone(), frames: self.frames.iter().map(|f| f.truth.clone()).collect() })?;
        write_json(&root.join("init.json"), &PoseFile { beta: vec![0.0; self.asset.n_shape], frames: self.frames.iter().map(|f| f.init.clone()).collect() })?;
        for (f, o) in self.frames.iter().zip(&self.observations) {
            o.image.save(&frame_path(root, f.index, "image"))?;
            o.mask.save(&frame_path(root, f.index, "mask"))?;
            o.clothing.save(&frame_path(root, f.index, "clothing"))?;
            o.body.save(&frame_path(root, f.index, "body"))?;
        }
        Ok(())
    }
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self> {
        let scene: SceneFile = read_json(&root.join("scene.json"))?;
        if scene.format != SCENE_FORMAT || scene.version != SCENE_VERSION {
            return Err(Error::Format(format!("unsupported scene {} v{}", scene.format, scene.version)));
        }
        let asset = BodyModelAsset::load(&root.join("asset.json"))?;
        let init: PoseFile = read_json(&root.join("init.json"))?;
        let truth_path = root.join("truth.json");
        let truth: Option<PoseFile> = if truth_path.exists() { Some(read_json(&truth_path)?) } else { None };
        for poses in std::iter::once(&init).chain(truth.as_ref()) {
            if poses.frames.len() != scene.frames.len() {
                return Err(Error::Invalid(format!("{} poses for {} frames", poses.frames.len(), scene.frames.len())));
            }
        }
        let mut observations = Vec::with_capacity(scene.frames.len());
        for f in &scene.frames {
            let image = Image::load(&frame_path(root, f.index, "image"))?;
            if [image.width, image.height] != scene.size {
                return Err(Error::Invalid(format!("frame {} is {}x{}, scene says {:?}", f.index, image.width, image.height, scene.size)));
            }
            let (obs, _) = FrameObservation::new(
                image,
                Mask::load(&frame_path(root, f.index, "mask"))?,
                Mask::load(&frame_path(root, f.index, "clothing"))?,
                Mask::load(&frame_path(root, f.index, "body"))?,
            )?;
            observations.push(obs);
        }
        Ok(Self { root: root.to_path_buf(), scene, asset, init, truth, observations })
    }

    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.scene.frames.len()).filter(|&i| !self.scene.frames[i].test).collect()
    }

    pub fn test_indices(&self) -> Vec<usize> {
        (0..self.scene.frames.len()).filter(|&i| self.scene.frames[i].test).collect()
    }

    pub fn observations_of(&self, indices: &[usize]) -> Vec<FrameObservation> {
        indices.iter().map(|&i| self.observations[i].clone()).collect()
    }

    pub fn init_poses_of(&self, indices: &[usize]) -> Vec<FramePose> {
        indices.iter().map(|&i| self.init.frames[i].clone()).collect()
    }

    /// Ground-truth poses where known, initial poses otherwise.
    pub fn reference_pose(&self, index: usize) -> &FramePose {
        self.truth.as_ref().map_or(&self.init.frames[index], |t| &t.frames[index])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::RenderConfig;
    use crate::workbench::synth::generate_synthetic;

    #[test]
    fn save_load_round_trip() {
        let spec = SynthSpec { frames: 5, size: 16, render: RenderConfig { n_coarse: 8, n_fine: 4, ..RenderConfig::default() }, ..SynthSpec::default() };
        let scene = generate_synthetic(&spec, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        scene.save(dir.path()).unwrap();
        let data = Dataset::load(dir.path()).unwrap();
        assert_eq!(data.asset, scene.asset);
        assert_eq!(data.test_indices(), vec![2]);
        assert_eq!(data.train_indices().len(), 4);
        assert_eq!(data.truth.as_ref().unwrap().beta, scene.beta);
        for (a, b) in data.observations.iter().zip(&scene.observations) {
            assert_eq!(a.mask, b.mask);
            assert_eq!(a.clothing, b.clothing);
            let err = a.image.pixels.iter().zip(&b.image.pixels).map(|(p, q)| (p - q).amax()).fold(0.0, f64::max);
            assert!(err <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn identical_seeds_write_identical_files() {
        let spec = SynthSpec { frames: 2, size: 16, render: RenderConfig { n_coarse: 8, n_fine: 4, ..RenderConfig::default() }, ..SynthSpec::default() };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate_synthetic(&spec, 8).unwrap().save(a.path()).unwrap();
        generate_synthetic(&spec, 8).unwrap().save(b.path()).unwrap();
        for name in ["scene.json", "asset.json", "truth.json", "init.json", "frames/0001_image.png", "frames/0000_clothing.png"] {
            assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
        }
    }

    #[test]
    fn missing_scene_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(Dataset::load(dir.path()).is_err());
    }
}
