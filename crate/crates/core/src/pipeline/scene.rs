use std::sync::Arc;

use crate::body_model::{pose_body, BodyParams};
use crate::canonical::CanonicalFrame;
use crate::fields::{eval_deformation, eval_offsets, eval_radiance, eval_texture, FieldSet};
use crate::math::Vec3;
use crate::render::{render_image, Bvh, Camera, RenderConfig, RenderOutput, VolumeField};
use crate::{Error, Result};

use super::{AvatarState, BodyContext};

/// A fitted avatar posed for rendering: the body mesh with its texture plus the clothing
/// volume seen through the body's canonical mapping.
pub struct AvatarScene {
    frame: CanonicalFrame,
    bvh: Bvh,
    colors: Vec<Vec3>,
    fields: Arc<FieldSet>,
    conditioning: Vec<Vec3>,
    sigma: f64,
    k: usize,
}

impl AvatarScene {
    pub fn new(state: &AvatarState, beta: &[f64], theta: &[f64], psi: &[f64]) -> Result<Self> {
        Self::with_context(state, &BodyContext::new(&state.asset, &state.canonical)?, beta, theta, psi)
    }

    pub fn with_context(state: &AvatarState, ctx: &BodyContext, beta: &[f64], theta: &[f64], psi: &[f64]) -> Result<Self> {
        let asset = &*ctx.asset;
        let params = BodyParams {
            beta: beta.to_vec(),
            theta: theta.to_vec(),
            psi: psi.to_vec(),
            offsets: eval_offsets(&state.fields.offset, &asset.template),
        };
        let posed = pose_body(&params, asset)?;
        if !posed.vertices.iter().all(|v| v.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("posed vertices"));
        }
        let conditioning = pose_body(&BodyParams::with_pose(asset, theta), asset)?.vertices;
        Ok(Self {
            bvh: Bvh::build(&posed.vertices, &asset.faces),
            frame: CanonicalFrame::new(ctx.asset.clone(), ctx.canonical.clone(), &posed)?,
            colors: eval_texture(&state.fields.texture, &asset.template),
            fields: Arc::new(state.fields.clone()),
            conditioning,
            sigma: ctx.sigma,
            k: ctx.k,
        })
    }

    /// Scene for training frame `index` with its refined pose.
    pub fn for_frame(state: &AvatarState, index: usize) -> Result<Self> {
        let f = state.frames.get(index).ok_or_else(|| Error::invalid(format!("no frame {index}")))?;
        Self::new(state, &state.beta, &f.theta, &f.psi)
    }

    pub fn posed_vertices(&self) -> &[Vec3] {
        &self.frame.posed_vertices
    }

    pub fn vertex_colors(&self) -> &[Vec3] {
        &self.colors
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    pub fn render(&self, camera: &Camera, width: usize, height: usize, cfg: &RenderConfig, seed: u64) -> Result<RenderOutput> {
        render_image(self, &self.bvh, &self.colors, camera, width, height, cfg, seed)
    }
}

impl VolumeField for AvatarScene {
    fn eval(&self, x: &Vec3, fine: bool) -> (Vec3, f64) {
        let nb = self.frame.knn(x, self.k);
        let Ok(sample) = self.frame.canonicalize_with(x, &nb.indices, self.sigma) else {
            return (Vec3::zeros(), 0.0);
        };
        let q = sample.canonical + eval_deformation(&self.fields.deformation, &sample.canonical, &self.conditioning[nb.indices[0]], None);
        let field = if fine { &self.fields.fine } else { &self.fields.coarse };
        eval_radiance(field, &q, None)
    }
}

/// The avatar in a new pose with its fitted shape.
pub fn repose(state: &AvatarState, theta: &[f64]) -> Result<AvatarScene> {
    let psi = vec![0.0; state.asset.n_expression];
    AvatarScene::new(state, &state.beta, theta, &psi)
}

/// The avatar with different body shape coefficients; the clothing follows the body.
pub fn reshape(state: &AvatarState, beta: &[f64], theta: &[f64]) -> Result<AvatarScene> {
    let psi = vec![0.0; state.asset.n_expression];
    AvatarScene::new(state, beta, theta, &psi)
}

/// Dresses `body` in the clothing of `clothing`: the radiance and deformation fields come
/// from `clothing`, everything describing the body from `body`.
pub fn transfer_clothing(body: &AvatarState, clothing: &AvatarState) -> Result<AvatarState> {
    if clothing.canonical != body.canonical {
        return Err(Error::invalid("clothing transfer needs identical canonical configurations"));
    }
    if clothing.asset.template != body.asset.template || clothing.asset.faces != body.asset.faces || clothing.asset.skin_weights != body.asset.skin_weights {
        return Err(Error::invalid("clothing transfer needs avatars built on the same body model"));
    }
    let mut out = body.clone();
    out.fields.coarse = clothing.fields.coarse.clone();
    out.fields.fine = clothing.fields.fine.clone();
    out.fields.deformation = clothing.fields.deformation.clone();
    Ok(out)
}
