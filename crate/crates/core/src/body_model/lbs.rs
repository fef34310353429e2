//! Blendshapes, joint regression, kinematic chain and per-vertex skinning transforms.

use serde::{Deserialize, Serialize};

use super::asset::BodyModelAsset;
use crate::error::{check_dim, Error, Result};
use crate::math::{
    affine, rodrigues, rodrigues_backward, rot_part, top_rows, trans_part, transform_point,
    translation, Mat3, Mat3x4, Mat4, Vec3,
};

/// Identity, pose, expression and per-vertex offsets.
///
/// `theta` holds one axis-angle triple per joint (joint 0 is the global orientation)
/// followed by a global translation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    pub psi: Vec<f64>,
    pub offsets: Vec<Vec3>,
}

impl BodyParams {
    pub fn zeros(asset: &BodyModelAsset) -> Self {
        BodyParams {
            beta: vec![0.0; asset.n_shape],
            theta: vec![0.0; asset.pose_dim()],
            psi: vec![0.0; asset.n_expression],
            offsets: vec![Vec3::zeros(); asset.n_vertices()],
        }
    }

    pub fn with_pose(asset: &BodyModelAsset, theta: &[f64]) -> Self {
        let mut p = Self::zeros(asset);
        p.theta.copy_from_slice(theta);
        p
    }

    pub fn validate(&self, asset: &BodyModelAsset) -> Result<()> {
        check_dim("beta", asset.n_shape, self.beta.len())?;
        check_dim("theta", asset.pose_dim(), self.theta.len())?;
        check_dim("psi", asset.n_expression, self.psi.len())?;
        check_dim("offsets", asset.n_vertices(), self.offsets.len())?;
        let finite = self.beta.iter().chain(&self.theta).chain(&self.psi).all(|v| v.is_finite())
            && self.offsets.iter().all(|o| o.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::NonFinite("body parameters"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PosedBody {
    pub vertices: Vec<Vec3>,
    pub vertex_transforms: Vec<Mat4>,
    pub joint_transforms: Vec<Mat4>,
    pub joints: Vec<Vec3>,
}

/// Intermediates kept from a forward pose for the reverse pass.
#[derive(Clone, Debug)]
pub struct PoseTrace {
    rotations: Vec<Mat3>,
    chain: Vec<Mat4>,
    rest_joints: Vec<Vec3>,
    displacement: Vec<Vec3>,
    skin_blend: Vec<Mat4>,
}

/// Gradients with respect to the body parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyParamGrads {
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    pub psi: Vec<f64>,
    pub offsets: Vec<Vec3>,
}

/// Upstream gradients entering the body model.
#[derive(Clone, Debug, Default)]
pub struct BodyUpstream {
    /// dL/dV for posed vertices.
    pub vertices: Option<Vec<Vec3>>,
    /// dL/dM_i for the top three rows of each vertex transform.
    pub transforms: Option<Vec<Mat3x4>>,
    /// dL/dT_P for the unposed shaped template `T + O + B`.
    pub shaped_template: Option<Vec<Vec3>>,
    /// dL/dB for the offset-free template `T + B`.
    pub blend: Option<Vec<Vec3>>,
}

fn joint_rotation(theta: &[f64], k: usize) -> Vec3 {
    Vec3::new(theta[3 * k], theta[3 * k + 1], theta[3 * k + 2])
}

fn global_translation(theta: &[f64], n_joints: usize) -> Vec3 {
    if theta.len() == 3 * n_joints + 3 {
        joint_rotation(theta, n_joints)
    } else {
        Vec3::zeros()
    }
}

fn pose_features(rotations: &[Mat3]) -> Vec<f64> {
    let mut f = Vec::with_capacity(9 * rotations.len().saturating_sub(1));
    for r in rotations.iter().skip(1) {
        let d = r - Mat3::identity();
        for row in 0..3 {
            for col in 0..3 {
                f.push(d[(row, col)]);
            }
        }
    }
    f
}

fn contract(basis: &[f64], n_comp: usize, coeffs: &[f64], out: &mut [Vec3]) {
    if n_comp == 0 {
        return;
    }
    for (i, d) in out.iter_mut().enumerate() {
        for a in 0..3 {
            let row = &basis[(i * 3 + a) * n_comp..(i * 3 + a + 1) * n_comp];
            d[a] += row.iter().zip(coeffs).map(|(b, c)| b * c).sum::<f64>();
        }
    }
}

fn rotations_from(theta: &[f64], n_joints: usize) -> Result<Vec<Mat3>> {
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pose angles"));
    }
    Ok((0..n_joints).map(|k| rodrigues(&joint_rotation(theta, k))).collect())
}

/// Total blendshape displacement `B_S(beta) + B_P(theta) + B_E(psi)`.
pub fn blend_shapes(params: &BodyParams, asset: &BodyModelAsset) -> Result<Vec<Vec3>> {
    check_dim("beta", asset.n_shape, params.beta.len())?;
    check_dim("theta", asset.pose_dim(), params.theta.len())?;
    check_dim("psi", asset.n_expression, params.psi.len())?;
    let rotations = rotations_from(&params.theta, asset.n_joints())?;
    Ok(displacement(asset, &params.beta, &rotations, &params.psi))
}

fn displacement(asset: &BodyModelAsset, beta: &[f64], rotations: &[Mat3], psi: &[f64]) -> Vec<Vec3> {
    let mut out = vec![Vec3::zeros(); asset.n_vertices()];
    contract(&asset.shape_basis, asset.n_shape, beta, &mut out);
    contract(&asset.pose_basis, asset.n_pose_features, &pose_features(rotations), &mut out);
    contract(&asset.expression_basis, asset.n_expression, psi, &mut out);
    out
}

/// Joint locations regressed from the shaped template.
pub fn regress_joints(beta: &[f64], asset: &BodyModelAsset) -> Result<Vec<Vec3>> {
    check_dim("beta", asset.n_shape, beta.len())?;
    let mut shaped: Vec<Vec3> = asset.template.iter().map(|t| Vec3::from(*t)).collect();
    contract(&asset.shape_basis, asset.n_shape, beta, &mut shaped);
    Ok(regress(asset, &shaped))
}

fn regress(asset: &BodyModelAsset, shaped: &[Vec3]) -> Vec<Vec3> {
    let nv = asset.n_vertices();
    (0..asset.n_joints())
        .map(|k| {
            let row = &asset.joint_regressor[k * nv..(k + 1) * nv];
            row.iter()
                .zip(shaped)
                .filter(|(w, _)| **w != 0.0)
                .fold(Vec3::zeros(), |acc, (w, v)| acc + v * *w)
        })
        .collect()
}

fn chain_transforms(
    rotations: &[Mat3],
    joints: &[Vec3],
    parents: &[Option<usize>],
    transl: &Vec3,
) -> Vec<Mat4> {
    let mut chain: Vec<Mat4> = Vec::with_capacity(rotations.len());
    for (k, rot) in rotations.iter().enumerate() {
        let a = match parents[k] {
            None => affine(rot, &(joints[k] + transl)),
            Some(p) => chain[p] * affine(rot, &(joints[k] - joints[p])),
        };
        chain.push(a);
    }
    chain
}

fn rest_relative(chain: &[Mat4], joints: &[Vec3]) -> Vec<Mat4> {
    chain
        .iter()
        .zip(joints)
        .map(|(a, j)| a * translation(&(-j)))
        .collect()
}

/// World transforms `G_k` of every joint, relative to the rest pose so that the
/// rest pose maps to identities.
pub fn joint_world_transforms(
    theta: &[f64],
    joints: &[Vec3],
    parents: &[Option<usize>],
) -> Result<Vec<Mat4>> {
    let nk = parents.len();
    if theta.len() != 3 * nk && theta.len() != 3 * nk + 3 {
        return Err(Error::Dimension {
            what: "theta",
            expected: 3 * nk + 3,
            got: theta.len(),
        });
    }
    check_dim("joints", nk, joints.len())?;
    for (k, p) in parents.iter().enumerate() {
        if let Some(p) = p {
            if *p >= k {
                return Err(Error::invalid("kinematic tree must list parents before children"));
            }
        }
    }
    let rotations = rotations_from(theta, nk)?;
    let chain = chain_transforms(&rotations, joints, parents, &global_translation(theta, nk));
    Ok(rest_relative(&chain, joints))
}

/// Per-vertex transforms `M_i = (sum_k w_ki G_k) * translate(o_i + B_i)`.
pub fn vertex_transforms(params: &BodyParams, asset: &BodyModelAsset) -> Result<Vec<Mat4>> {
    Ok(pose_body(params, asset)?.vertex_transforms)
}

pub fn pose_body(params: &BodyParams, asset: &BodyModelAsset) -> Result<PosedBody> {
    Ok(pose_body_traced(params, asset)?.0)
}

pub fn pose_body_traced(
    params: &BodyParams,
    asset: &BodyModelAsset,
) -> Result<(PosedBody, PoseTrace)> {
    params.validate(asset)?;
    let nk = asset.n_joints();
    let rotations = rotations_from(&params.theta, nk)?;
    let displacement = displacement(asset, &params.beta, &rotations, &params.psi);

    let mut shaped: Vec<Vec3> = asset.template.iter().map(|t| Vec3::from(*t)).collect();
    contract(&asset.shape_basis, asset.n_shape, &params.beta, &mut shaped);
    let rest_joints = regress(asset, &shaped);

    let transl = global_translation(&params.theta, nk);
    let chain = chain_transforms(&rotations, &rest_joints, &asset.parents, &transl);
    let joint_transforms = rest_relative(&chain, &rest_joints);

    let nv = asset.n_vertices();
    let mut skin_blend = Vec::with_capacity(nv);
    let mut vertex_transforms = Vec::with_capacity(nv);
    let mut vertices = Vec::with_capacity(nv);
    for i in 0..nv {
        let mut blend = Mat4::zeros();
        for (k, w) in asset.weights(i).iter().enumerate() {
            if *w != 0.0 {
                blend += joint_transforms[k] * *w;
            }
        }
        blend.set_row(3, &nalgebra::RowVector4::new(0.0, 0.0, 0.0, 1.0));
        let m = blend * translation(&(params.offsets[i] + displacement[i]));
        vertices.push(transform_point(&m, &asset.template_vertex(i)));
        skin_blend.push(blend);
        vertex_transforms.push(m);
    }
    let joints = chain.iter().map(trans_part).collect();
    Ok((
        PosedBody {
            vertices,
            vertex_transforms,
            joint_transforms,
            joints,
        },
        PoseTrace {
            rotations,
            chain,
            rest_joints,
            displacement,
            skin_blend,
        },
    ))
}

/// Unposed shaped template `T + O + B(beta, theta, psi)`.
pub fn shaped_template(params: &BodyParams, asset: &BodyModelAsset) -> Result<Vec<Vec3>> {
    let b = blend_shapes(params, asset)?;
    Ok(asset
        .template
        .iter()
        .zip(&params.offsets)
        .zip(&b)
        .map(|((t, o), b)| Vec3::from(*t) + o + b)
        .collect())
}

fn contract_transpose(basis: &[f64], n_comp: usize, grad: &[Vec3], out: &mut [f64]) {
    if n_comp == 0 {
        return;
    }
    for (i, g) in grad.iter().enumerate() {
        for a in 0..3 {
            if g[a] == 0.0 {
                continue;
            }
            let row = &basis[(i * 3 + a) * n_comp..(i * 3 + a + 1) * n_comp];
            for (o, b) in out.iter_mut().zip(row) {
                *o += b * g[a];
            }
        }
    }
}

/// Reverse pass through [`pose_body_traced`].
pub fn pose_backward(
    params: &BodyParams,
    asset: &BodyModelAsset,
    trace: &PoseTrace,
    upstream: &BodyUpstream,
) -> BodyParamGrads {
    let nv = asset.n_vertices();
    let nk = asset.n_joints();
    let mut d_m: Vec<Mat3x4> = match &upstream.transforms {
        Some(t) => t.clone(),
        None => vec![Mat3x4::zeros(); nv],
    };
    if let Some(dv) = &upstream.vertices {
        for i in 0..nv {
            let t = asset.template_vertex(i);
            let th = nalgebra::Vector4::new(t.x, t.y, t.z, 1.0);
            d_m[i] += dv[i] * th.transpose();
        }
    }

    let mut d_u = vec![Vec3::zeros(); nv];
    let mut d_g = vec![Mat3x4::zeros(); nk];
    for i in 0..nv {
        let s = top_rows(&trace.skin_blend[i]);
        let s_rot = s.fixed_view::<3, 3>(0, 0).into_owned();
        let dm_rot = d_m[i].fixed_view::<3, 3>(0, 0).into_owned();
        let dm_t = d_m[i].fixed_view::<3, 1>(0, 3).into_owned();
        let u = params.offsets[i] + trace.displacement[i];
        let mut d_s = Mat3x4::zeros();
        d_s.fixed_view_mut::<3, 3>(0, 0).copy_from(&(dm_rot + dm_t * u.transpose()));
        d_s.fixed_view_mut::<3, 1>(0, 3).copy_from(&dm_t);
        d_u[i] = s_rot.transpose() * dm_t;
        for (k, w) in asset.weights(i).iter().enumerate() {
            if *w != 0.0 {
                d_g[k] += d_s * *w;
            }
        }
    }

    // G_k = [A_R | A_t - A_R J_k]
    let mut d_a_rot = vec![Mat3::zeros(); nk];
    let mut d_a_t = vec![Vec3::zeros(); nk];
    let mut d_joint = vec![Vec3::zeros(); nk];
    for k in 0..nk {
        let a_rot = rot_part(&trace.chain[k]);
        let dg_rot = d_g[k].fixed_view::<3, 3>(0, 0).into_owned();
        let dg_t: Vec3 = d_g[k].fixed_view::<3, 1>(0, 3).into_owned();
        d_a_rot[k] = dg_rot - dg_t * trace.rest_joints[k].transpose();
        d_a_t[k] = dg_t;
        d_joint[k] -= a_rot.transpose() * dg_t;
    }
    let mut d_rot = vec![Mat3::zeros(); nk];
    let mut d_transl = Vec3::zeros();
    for k in (0..nk).rev() {
        match asset.parents[k] {
            None => {
                d_rot[k] += d_a_rot[k];
                d_joint[k] += d_a_t[k];
                d_transl += d_a_t[k];
            }
            Some(p) => {
                let ap_rot = rot_part(&trace.chain[p]);
                let rel = trace.rest_joints[k] - trace.rest_joints[p];
                let rk = trace.rotations[k];
                let dak_rot = d_a_rot[k];
                let dak_t = d_a_t[k];
                d_a_rot[p] += dak_rot * rk.transpose() + dak_t * rel.transpose();
                d_a_t[p] += dak_t;
                d_rot[k] += ap_rot.transpose() * dak_rot;
                let d_rel = ap_rot.transpose() * dak_t;
                d_joint[k] += d_rel;
                d_joint[p] -= d_rel;
            }
        }
    }

    // u_i = o_i + B_i, and the shaped template T + O + B shares both.
    let mut d_b = d_u.clone();
    let mut d_offsets = d_u;
    if let Some(ds) = &upstream.shaped_template {
        for i in 0..nv {
            d_b[i] += ds[i];
            d_offsets[i] += ds[i];
        }
    }
    if let Some(db) = &upstream.blend {
        for i in 0..nv {
            d_b[i] += db[i];
        }
    }

    let mut d_beta = vec![0.0; asset.n_shape];
    contract_transpose(&asset.shape_basis, asset.n_shape, &d_b, &mut d_beta);
    let mut d_psi = vec![0.0; asset.n_expression];
    contract_transpose(&asset.expression_basis, asset.n_expression, &d_b, &mut d_psi);
    let mut d_feat = vec![0.0; asset.n_pose_features];
    contract_transpose(&asset.pose_basis, asset.n_pose_features, &d_b, &mut d_feat);
    for k in 1..nk {
        let base = 9 * (k - 1);
        for row in 0..3 {
            for col in 0..3 {
                d_rot[k][(row, col)] += d_feat[base + 3 * row + col];
            }
        }
    }

    // joints are regressed from T + B_S(beta)
    let mut d_shaped = vec![Vec3::zeros(); nv];
    for k in 0..nk {
        let row = &asset.joint_regressor[k * nv..(k + 1) * nv];
        for (i, w) in row.iter().enumerate() {
            if *w != 0.0 {
                d_shaped[i] += d_joint[k] * *w;
            }
        }
    }
    contract_transpose(&asset.shape_basis, asset.n_shape, &d_shaped, &mut d_beta);

    let mut d_theta = vec![0.0; params.theta.len()];
    for k in 0..nk {
        let g = rodrigues_backward(&joint_rotation(&params.theta, k), &d_rot[k]);
        d_theta[3 * k..3 * k + 3].copy_from_slice(g.as_slice());
    }
    if params.theta.len() == 3 * nk + 3 {
        d_theta[3 * nk..].copy_from_slice(d_transl.as_slice());
    }
    BodyParamGrads {
        beta: d_beta,
        theta: d_theta,
        psi: d_psi,
        offsets: d_offsets,
    }
}
