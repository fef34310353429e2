//! Implicit functions of the avatar: clothing radiance, non-rigid deformation, vertex offsets
//! and vertex texture.

mod encoding;
mod mlp;

pub use encoding::PositionalEncoding;
pub use mlp::{Activation, Mlp, MlpTape};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::{sigmoid, softplus, Vec3};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Head {
    /// sigmoid color followed by softplus density
    Radiance,
    /// sigmoid color
    Color,
    Linear,
}

impl Head {
    fn raw_dim(self) -> usize {
        match self {
            Head::Radiance => 4,
            Head::Color | Head::Linear => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldArch {
    pub octaves: usize,
    pub width: usize,
    pub depth: usize,
    pub skips: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl FieldArch {
    pub fn new(depth: usize, width: usize, octaves: usize) -> Self {
        Self { octaves, width, depth, skips: Vec::new(), activation: Activation::default() }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_skip(mut self, layer: usize) -> Self {
        self.skips.push(layer);
        self
    }
}

/// An encoded-input MLP with an activation head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub encoding: PositionalEncoding,
    pub input_dim: usize,
    pub head: Head,
    pub mlp: Mlp,
}

#[derive(Clone, Debug, Default)]
pub struct FieldTape {
    input: Vec<f64>,
    mlp: MlpTape,
    raw: Vec<f64>,
}

impl Field {
    pub fn new(input_dim: usize, arch: &FieldArch, head: Head) -> Result<Self> {
        if arch.depth == 0 {
            return Err(Error::invalid("field needs at least one hidden layer"));
        }
        let encoding = PositionalEncoding::new(arch.octaves);
        let mlp = Mlp::new(
            encoding.output_dim(input_dim),
            vec![arch.width; arch.depth],
            head.raw_dim(),
            arch.skips.clone(),
        )?
        .with_activation(arch.activation)?;
        Ok(Self { encoding, input_dim, head, mlp })
    }

    pub fn n_params(&self) -> usize {
        self.mlp.n_params()
    }

    pub fn params(&self) -> &[f64] {
        &self.mlp.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.mlp.params
    }

    pub fn output_dim(&self) -> usize {
        self.head.raw_dim()
    }

    pub fn forward(&self, x: &[f64], tape: Option<&mut FieldTape>) -> Vec<f64> {
        let mut features = Vec::with_capacity(self.mlp.input_dim);
        self.encoding.encode(x, &mut features);
        let raw = match tape {
            Some(t) => {
                let raw = self.mlp.forward(&features, Some(&mut t.mlp));
                t.input = x.to_vec();
                t.raw = raw.clone();
                raw
            }
            None => self.mlp.forward(&features, None),
        };
        self.activate(&raw)
    }

    fn activate(&self, raw: &[f64]) -> Vec<f64> {
        match self.head {
            Head::Linear => raw.to_vec(),
            Head::Color => raw.iter().map(|v| sigmoid(*v)).collect(),
            Head::Radiance => vec![sigmoid(raw[0]), sigmoid(raw[1]), sigmoid(raw[2]), softplus(raw[3])],
        }
    }

    /// Accumulates parameter gradients into `grad`; returns the gradient of the raw input.
    pub fn backward(&self, tape: &FieldTape, d_out: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        if tape.mlp.is_empty() {
            return Err(Error::BackwardWithoutForward);
        }
        let d_raw: Vec<f64> = match self.head {
            Head::Linear => d_out.to_vec(),
            _ => d_out
                .iter()
                .zip(&tape.raw)
                .enumerate()
                .map(|(i, (d, r))| {
                    if i < 3 {
                        let s = sigmoid(*r);
                        d * s * (1.0 - s)
                    } else {
                        d * sigmoid(*r)
                    }
                })
                .collect(),
        };
        let d_features = self.mlp.backward(&tape.mlp, &d_raw, grad)?;
        Ok(self.encoding.backward(&tape.input, &d_features))
    }

    pub fn forward_batch(&self, inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        inputs.iter().map(|x| self.forward(x, None)).collect()
    }
}

/// Clothing color and density at a canonical point.
pub fn eval_radiance(field: &Field, x: &Vec3, tape: Option<&mut FieldTape>) -> (Vec3, f64) {
    let out = field.forward(x.as_slice(), tape);
    (Vec3::new(out[0], out[1], out[2]), out[3])
}

/// Residual displacement of a canonical point, conditioned on its nearest posed vertex.
pub fn eval_deformation(field: &Field, x: &Vec3, vertex: &Vec3, tape: Option<&mut FieldTape>) -> Vec3 {
    let input = [x.x, x.y, x.z, vertex.x, vertex.y, vertex.z];
    Vec3::from_column_slice(&field.forward(&input, tape))
}

pub fn eval_offsets(field: &Field, template: &[[f64; 3]]) -> Vec<Vec3> {
    template.iter().map(|t| Vec3::from_column_slice(&field.forward(t, None))).collect()
}

pub fn eval_texture(field: &Field, template: &[[f64; 3]]) -> Vec<Vec3> {
    eval_offsets(field, template)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldsConfig {
    pub radiance: FieldArch,
    pub deformation: FieldArch,
    pub offset: FieldArch,
    pub texture: FieldArch,
    /// added to the initial density pre-activation; negative values start transparent
    pub density_bias: f64,
}

impl Default for FieldsConfig {
    fn default() -> Self {
        Self {
            radiance: FieldArch::new(8, 256, 10).with_skip(4),
            deformation: FieldArch::new(6, 128, 6),
            offset: FieldArch::new(4, 128, 6),
            texture: FieldArch::new(4, 128, 6),
            density_bias: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSet {
    pub coarse: Field,
    pub fine: Field,
    pub deformation: Field,
    pub offset: Field,
    pub texture: Field,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldId {
    Coarse,
    Fine,
    Deformation,
    Offset,
    Texture,
}

impl FieldId {
    pub const ALL: [FieldId; 5] = [FieldId::Coarse, FieldId::Fine, FieldId::Deformation, FieldId::Offset, FieldId::Texture];
}

impl FieldSet {
    pub fn new<R: Rng>(cfg: &FieldsConfig, rng: &mut R) -> Result<Self> {
        let mut coarse = Field::new(3, &cfg.radiance, Head::Radiance)?;
        let mut fine = coarse.clone();
        let mut deformation = Field::new(6, &cfg.deformation, Head::Linear)?;
        let mut offset = Field::new(3, &cfg.offset, Head::Linear)?;
        let mut texture = Field::new(3, &cfg.texture, Head::Color)?;
        for f in [&mut coarse, &mut fine] {
            f.mlp.init(rng, false);
            f.mlp.output_bias_mut()[3] = cfg.density_bias;
        }
        deformation.mlp.init(rng, true);
        offset.mlp.init(rng, true);
        texture.mlp.init(rng, true);
        Ok(Self { coarse, fine, deformation, offset, texture })
    }

    pub fn get(&self, id: FieldId) -> &Field {
        match id {
            FieldId::Coarse => &self.coarse,
            FieldId::Fine => &self.fine,
            FieldId::Deformation => &self.deformation,
            FieldId::Offset => &self.offset,
            FieldId::Texture => &self.texture,
        }
    }

    pub fn get_mut(&mut self, id: FieldId) -> &mut Field {
        match id {
            FieldId::Coarse => &mut self.coarse,
            FieldId::Fine => &mut self.fine,
            FieldId::Deformation => &mut self.deformation,
            FieldId::Offset => &mut self.offset,
            FieldId::Texture => &mut self.texture,
        }
    }

    pub fn all_finite(&self) -> bool {
        FieldId::ALL.iter().all(|id| self.get(*id).params().iter().all(|p| p.is_finite()))
    }
}

/// Per-field parameter gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGrads {
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
    pub deformation: Vec<f64>,
    pub offset: Vec<f64>,
    pub texture: Vec<f64>,
}

impl FieldGrads {
    pub fn zeros(fields: &FieldSet) -> Self {
        Self {
            coarse: vec![0.0; fields.coarse.n_params()],
            fine: vec![0.0; fields.fine.n_params()],
            deformation: vec![0.0; fields.deformation.n_params()],
            offset: vec![0.0; fields.offset.n_params()],
            texture: vec![0.0; fields.texture.n_params()],
        }
    }

    pub fn get(&self, id: FieldId) -> &[f64] {
        match id {
            FieldId::Coarse => &self.coarse,
            FieldId::Fine => &self.fine,
            FieldId::Deformation => &self.deformation,
            FieldId::Offset => &self.offset,
            FieldId::Texture => &self.texture,
        }
    }

    pub fn get_mut(&mut self, id: FieldId) -> &mut Vec<f64> {
        match id {
            FieldId::Coarse => &mut self.coarse,
            FieldId::Fine => &mut self.fine,
            FieldId::Deformation => &mut self.deformation,
            FieldId::Offset => &mut self.offset,
            FieldId::Texture => &mut self.texture,
        }
    }

    pub fn add(&mut self, other: &FieldGrads) {
        for id in FieldId::ALL {
            for (a, b) in self.get_mut(id).iter_mut().zip(other.get(id)) {
                *a += b;
            }
        }
    }
}
