use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::math::Vec3;

pub const ASSET_FORMAT: &str = "hybrid-avatar.body-model";
pub const ASSET_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Body,
    Face,
    Hand,
}

/// Parametric body model data.
///
/// Array layouts (all 64-bit floats, row-major):
/// * `shape_basis`: `n_v x 3 x n_shape`, indexed `(vertex * 3 + axis) * n_shape + component`;
///   `pose_basis` and `expression_basis` follow the same layout.
/// * `skin_weights`: `n_v x n_k`, vertex-major (one partition of unity per vertex).
/// * `joint_regressor`: `n_k x n_v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyModelAsset {
    pub format: String,
    pub version: u32,
    pub template: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    pub n_shape: usize,
    pub shape_basis: Vec<f64>,
    pub n_pose_features: usize,
    pub pose_basis: Vec<f64>,
    pub n_expression: usize,
    pub expression_basis: Vec<f64>,
    pub skin_weights: Vec<f64>,
    pub joint_regressor: Vec<f64>,
    pub parents: Vec<Option<usize>>,
    pub joint_names: Vec<String>,
    pub regions: Vec<Region>,
    pub hand_vertices: Vec<usize>,
}

impl BodyModelAsset {
    pub fn n_vertices(&self) -> usize {
        self.template.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_joints(&self) -> usize {
        self.parents.len()
    }

    /// Length of the pose vector: one axis-angle per joint plus a global translation.
    pub fn pose_dim(&self) -> usize {
        3 * self.n_joints() + 3
    }

    pub fn template_vertex(&self, i: usize) -> Vec3 {
        Vec3::from(self.template[i])
    }

    pub fn weights(&self, vertex: usize) -> &[f64] {
        let k = self.n_joints();
        &self.skin_weights[vertex * k..(vertex + 1) * k]
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != ASSET_FORMAT {
            return Err(Error::Format(format!(
                "unexpected asset format tag {:?}",
                self.format
            )));
        }
        if self.version != ASSET_VERSION {
            return Err(Error::Format(format!(
                "unsupported asset version {} (expected {ASSET_VERSION})",
                self.version
            )));
        }
        let nv = self.n_vertices();
        let nk = self.n_joints();
        if nv == 0 || nk == 0 {
            return Err(Error::invalid("asset needs at least one vertex and one joint"));
        }
        if self.n_pose_features != 9 * (nk - 1) {
            return Err(Error::Dimension {
                what: "pose-corrective features",
                expected: 9 * (nk - 1),
                got: self.n_pose_features,
            });
        }
        check_dim("shape basis", nv * 3 * self.n_shape, self.shape_basis.len())?;
        check_dim("pose basis", nv * 3 * self.n_pose_features, self.pose_basis.len())?;
        check_dim(
            "expression basis",
            nv * 3 * self.n_expression,
            self.expression_basis.len(),
        )?;
        check_dim("skinning weights", nv * nk, self.skin_weights.len())?;
        check_dim("joint regressor", nk * nv, self.joint_regressor.len())?;
        check_dim("joint names", nk, self.joint_names.len())?;
        check_dim("region labels", nv, self.regions.len())?;

        let all_finite = self.template.iter().flatten().all(|v| v.is_finite())
            && self.shape_basis.iter().all(|v| v.is_finite())
            && self.pose_basis.iter().all(|v| v.is_finite())
            && self.expression_basis.iter().all(|v| v.is_finite())
            && self.joint_regressor.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::NonFinite("body model asset"));
        }
        for (f, face) in self.faces.iter().enumerate() {
            if face.iter().any(|&i| i >= nv) {
                return Err(Error::invalid(format!("face {f} references a missing vertex")));
            }
        }
        for i in 0..nv {
            let w = self.weights(i);
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::invalid(format!(
                    "vertex {i} has a negative or non-finite skinning weight"
                )));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "skinning weights of vertex {i} sum to {sum}"
                )));
            }
        }
        if self.parents[0].is_some() {
            return Err(Error::invalid("joint 0 must be the root of the kinematic tree"));
        }
        for (k, p) in self.parents.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < k => {}
                _ => {
                    return Err(Error::invalid(format!(
                        "joint {k} must have a parent with a smaller index"
                    )))
                }
            }
        }
        if self.hand_vertices.iter().any(|&i| i >= nv) {
            return Err(Error::invalid("hand vertex index out of range"));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let asset: BodyModelAsset = serde_json::from_str(&text)?;
        asset.validate()?;
        Ok(asset)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path)?;
        serde_json::to_writer(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(())
    }

    /// Unique undirected edges `(a, b)` with `a < b`, in first-seen face order.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for face in &self.faces {
            for e in 0..3 {
                let (a, b) = (face[e], face[(e + 1) % 3]);
                let key = [a.min(b), a.max(b)];
                if seen.insert(key) {
                    out.push(key);
                }
            }
        }
        out
    }
}
