//! Observation-to-canonical mapping by blended inverse skinning over nearby posed vertices.

mod knn;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use knn::{knn_brute_force, Neighbors, VertexGrid};

use crate::body_model::{pose_body, BodyModelAsset, BodyParams, PosedBody};
use crate::error::{check_dim, Error, Result};
use crate::math::{affine_inverse, apply_3x4, top_rows, Mat3x4, Mat4, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalConfig {
    /// Kernel width of the blend weights.
    pub sigma: f64,
    /// Neighbourhood size.
    pub k: usize,
    /// Canonical pose vector (axis-angles plus global translation).
    pub pose: Vec<f64>,
}

impl CanonicalConfig {
    pub fn for_asset(asset: &BodyModelAsset) -> Self {
        CanonicalConfig {
            sigma: 0.1,
            k: 6,
            pose: canonical_pose(asset),
        }
    }

    pub fn validate(&self, asset: &BodyModelAsset) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::invalid("canonical kernel width must be positive"));
        }
        if self.k == 0 {
            return Err(Error::invalid("neighbour count must be at least 1"));
        }
        check_dim("canonical pose", asset.pose_dim(), self.pose.len())
    }
}

/// Star-like pose: arms abducted 45 degrees, legs 15 degrees, everything else at rest.
/// Joints are found by name (`l_shoulder`, `r_shoulder`, `l_hip`, `r_hip`); assets
/// without them get the rest pose.
pub fn canonical_pose(asset: &BodyModelAsset) -> Vec<f64> {
    let mut pose = vec![0.0; asset.pose_dim()];
    let abduct = [
        ("l_shoulder", 45f64),
        ("r_shoulder", -45.0),
        ("l_hip", 15.0),
        ("r_hip", -15.0),
    ];
    for (name, deg) in abduct {
        match asset.joint_index(name) {
            Some(k) => pose[3 * k + 2] = deg.to_radians(),
            None => log::warn!("asset has no joint named {name}; canonical pose keeps it at rest"),
        }
    }
    pose
}

/// Unnormalised blend weights `omega_i` for each neighbour and their sum.
///
/// `neighbors[0]` must be the nearest vertex.
pub fn canonicalization_weights(
    x: &Vec3,
    neighbors: &[usize],
    posed_vertices: &[Vec3],
    asset: &BodyModelAsset,
    sigma: f64,
) -> (Vec<f64>, f64) {
    let nn = asset.weights(neighbors[0]);
    let scale = 1.0 / (2.0 * sigma * sigma);
    let omega: Vec<f64> = neighbors
        .iter()
        .map(|&i| {
            let dist = (x - posed_vertices[i]).norm();
            let wd = weight_distance(nn, asset.weights(i));
            (-dist * wd * scale).exp()
        })
        .collect();
    let total = omega.iter().sum();
    (omega, total)
}

fn weight_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Vertex transforms of the body in canonical pose with zero shape, expression and offsets.
#[derive(Clone, Debug)]
pub struct CanonicalBody {
    pub transforms: Vec<Mat4>,
    pub vertices: Vec<Vec3>,
}

impl CanonicalBody {
    pub fn new(asset: &BodyModelAsset, cfg: &CanonicalConfig) -> Result<Self> {
        cfg.validate(asset)?;
        let posed = pose_body(&BodyParams::with_pose(asset, &cfg.pose), asset)?;
        Ok(CanonicalBody {
            transforms: posed.vertex_transforms,
            vertices: posed.vertices,
        })
    }
}

/// Everything needed to canonicalize points of one observed frame.
#[derive(Clone, Debug)]
pub struct CanonicalFrame {
    asset: Arc<BodyModelAsset>,
    canonical: Arc<CanonicalBody>,
    pub inverse_transforms: Vec<Mat4>,
    /// Top three rows of `M_i(canonical) * M_i(observed)^-1`.
    pub blended: Vec<Mat3x4>,
    pub posed_vertices: Vec<Vec3>,
    grid: VertexGrid,
}

/// Record of one canonicalized point for the reverse pass.
#[derive(Clone, Debug)]
pub struct CanonicalSample {
    pub x: Vec3,
    pub canonical: Vec3,
    pub neighbors: Vec<usize>,
    /// Normalised blend coefficients.
    pub coefficients: Vec<f64>,
    distances: Vec<f64>,
    weight_distances: Vec<f64>,
    mapped: Vec<Vec3>,
}

/// Per-vertex gradient accumulators filled by [`CanonicalFrame::backward`].
#[derive(Clone, Debug)]
pub struct CanonicalGrads {
    pub blended: Vec<Mat3x4>,
    pub vertices: Vec<Vec3>,
}

impl CanonicalGrads {
    pub fn zeros(n: usize) -> Self {
        CanonicalGrads {
            blended: vec![Mat3x4::zeros(); n],
            vertices: vec![Vec3::zeros(); n],
        }
    }

    pub fn add(&mut self, other: &CanonicalGrads) {
        for (a, b) in self.blended.iter_mut().zip(&other.blended) {
            *a += b;
        }
        for (a, b) in self.vertices.iter_mut().zip(&other.vertices) {
            *a += b;
        }
    }
}

impl CanonicalFrame {
    pub fn new(
        asset: Arc<BodyModelAsset>,
        canonical: Arc<CanonicalBody>,
        posed: &PosedBody,
    ) -> Result<Self> {
        let mut inverse_transforms = Vec::with_capacity(posed.vertex_transforms.len());
        let mut blended = Vec::with_capacity(posed.vertex_transforms.len());
        for (i, m) in posed.vertex_transforms.iter().enumerate() {
            let inv = affine_inverse(m).ok_or_else(|| {
                Error::Contract(format!("vertex transform {i} is not invertible"))
            })?;
            blended.push(top_rows(&(canonical.transforms[i] * inv)));
            inverse_transforms.push(inv);
        }
        Ok(CanonicalFrame {
            grid: VertexGrid::new(&posed.vertices),
            asset,
            canonical,
            inverse_transforms,
            blended,
            posed_vertices: posed.vertices.clone(),
        })
    }

    pub fn asset(&self) -> &BodyModelAsset {
        &self.asset
    }

    pub fn canonical_vertices(&self) -> &[Vec3] {
        &self.canonical.vertices
    }

    pub fn knn(&self, x: &Vec3, k: usize) -> Neighbors {
        self.grid.knn(x, k)
    }

    /// Canonicalizes `x` with a fixed neighbour set (selection is not differentiated).
    pub fn canonicalize_with(&self, x: &Vec3, neighbors: &[usize], sigma: f64) -> Result<CanonicalSample> {
        let nn = self.asset.weights(neighbors[0]);
        let scale = 1.0 / (2.0 * sigma * sigma);
        let mut distances = Vec::with_capacity(neighbors.len());
        let mut weight_distances = Vec::with_capacity(neighbors.len());
        let mut omega = Vec::with_capacity(neighbors.len());
        for &i in neighbors {
            let d = (x - self.posed_vertices[i]).norm();
            let wd = weight_distance(nn, self.asset.weights(i));
            distances.push(d);
            weight_distances.push(wd);
            omega.push((-d * wd * scale).exp());
        }
        let mut total: f64 = omega.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            // all weights underflowed: fall back to the nearest vertex alone
            omega.iter_mut().for_each(|w| *w = 0.0);
            omega[0] = 1.0;
            total = 1.0;
        }
        let coefficients: Vec<f64> = omega.iter().map(|w| w / total).collect();
        let mapped: Vec<Vec3> = neighbors.iter().map(|&i| apply_3x4(&self.blended[i], x)).collect();
        let canonical = mapped
            .iter()
            .zip(&coefficients)
            .fold(Vec3::zeros(), |acc, (m, c)| acc + m * *c);
        if !canonical.iter().all(|v| v.is_finite()) {
            return Err(Error::Contract("canonicalized point is not finite".into()));
        }
        Ok(CanonicalSample {
            x: *x,
            canonical,
            neighbors: neighbors.to_vec(),
            coefficients,
            distances,
            weight_distances,
            mapped,
        })
    }

    pub fn canonicalize(&self, x: &Vec3, cfg: &CanonicalConfig) -> Result<CanonicalSample> {
        let nb = self.knn(x, cfg.k);
        self.canonicalize_with(x, &nb.indices, cfg.sigma)
    }

    /// Accumulates gradients of the blended transforms and posed vertices from `d_canonical`,
    /// returning the gradient with respect to the observation-space point.
    pub fn backward(
        &self,
        sample: &CanonicalSample,
        d_canonical: &Vec3,
        sigma: f64,
        grads: &mut CanonicalGrads,
    ) -> Vec3 {
        let xh = nalgebra::Vector4::new(sample.x.x, sample.x.y, sample.x.z, 1.0);
        let mut dx = Vec3::zeros();
        let mut d_coef = Vec::with_capacity(sample.neighbors.len());
        for (j, &i) in sample.neighbors.iter().enumerate() {
            let c = sample.coefficients[j];
            grads.blended[i] += (d_canonical * c) * xh.transpose();
            dx += self.blended[i].fixed_view::<3, 3>(0, 0).transpose() * (d_canonical * c);
            d_coef.push(d_canonical.dot(&sample.mapped[j]));
        }
        // coefficients c_j = omega_j / sum(omega); omega_j = exp(-r_j w_j / (2 sigma^2))
        let weighted: f64 = d_coef.iter().zip(&sample.coefficients).map(|(d, c)| d * c).sum();
        let scale = 1.0 / (2.0 * sigma * sigma);
        for (j, &i) in sample.neighbors.iter().enumerate() {
            let r = sample.distances[j];
            let wd = sample.weight_distances[j];
            if wd == 0.0 || r == 0.0 {
                continue;
            }
            // d omega_j scaled by omega_j / sum cancels into the coefficient
            let d_log_omega = sample.coefficients[j] * (d_coef[j] - weighted);
            let d_r = d_log_omega * (-wd * scale);
            let dir = (sample.x - self.posed_vertices[i]) / r;
            dx += dir * d_r;
            grads.vertices[i] -= dir * d_r;
        }
        dx
    }

    /// Converts accumulated blended-transform gradients into gradients of the observed
    /// vertex transforms `M_i` (top three rows).
    pub fn transform_grads(&self, d_blended: &[Mat3x4]) -> Vec<Mat3x4> {
        d_blended
            .iter()
            .enumerate()
            .map(|(i, d)| {
                if d.iter().all(|v| *v == 0.0) {
                    return Mat3x4::zeros();
                }
                let mut d4 = Mat4::zeros();
                d4.fixed_view_mut::<3, 4>(0, 0).copy_from(d);
                let d_inv = self.canonical.transforms[i].transpose() * d4;
                let inv_t = self.inverse_transforms[i].transpose();
                top_rows(&(-(inv_t * d_inv * inv_t)))
            })
            .collect()
    }
}
