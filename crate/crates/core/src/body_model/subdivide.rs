use std::collections::HashMap;

use super::asset::{BodyModelAsset, Region};
use crate::error::{Error, Result};

/// Splits every triangle into four at edge midpoints and carries every per-vertex
/// attribute over by midpoint interpolation.
pub fn subdivide(asset: &BodyModelAsset) -> Result<BodyModelAsset> {
    let nv = asset.n_vertices();
    let nk = asset.n_joints();

    let mut edge_faces: HashMap<(usize, usize), usize> = HashMap::new();
    for face in &asset.faces {
        for e in 0..3 {
            let (a, b) = (face[e], face[(e + 1) % 3]);
            *edge_faces.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut bad: Vec<_> = edge_faces.iter().filter(|(_, c)| **c > 2).collect();
    bad.sort();
    if let Some(((a, b), c)) = bad.first() {
        return Err(Error::NonManifold(*a, *b, **c));
    }

    // midpoints get indices in first-seen face order
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut new_edges: Vec<(usize, usize)> = Vec::new();
    let mut faces = Vec::with_capacity(asset.faces.len() * 4);
    for face in &asset.faces {
        let mut mids = [0usize; 3];
        for e in 0..3 {
            let (a, b) = (face[e], face[(e + 1) % 3]);
            let key = (a.min(b), a.max(b));
            mids[e] = *midpoint.entry(key).or_insert_with(|| {
                new_edges.push(key);
                nv + new_edges.len() - 1
            });
        }
        let [a, b, c] = *face;
        let [ab, bc, ca] = mids;
        faces.push([a, ab, ca]);
        faces.push([ab, b, bc]);
        faces.push([ca, bc, c]);
        faces.push([ab, bc, ca]);
    }
    let total = nv + new_edges.len();

    let mut template = asset.template.clone();
    for &(a, b) in &new_edges {
        let (pa, pb) = (asset.template[a], asset.template[b]);
        template.push([
            0.5 * (pa[0] + pb[0]),
            0.5 * (pa[1] + pb[1]),
            0.5 * (pa[2] + pb[2]),
        ]);
    }

    let per_vertex = |data: &[f64], stride: usize| -> Vec<f64> {
        let mut out = Vec::with_capacity(total * stride);
        out.extend_from_slice(data);
        for &(a, b) in &new_edges {
            for j in 0..stride {
                out.push(0.5 * (data[a * stride + j] + data[b * stride + j]));
            }
        }
        out
    };
    let shape_basis = per_vertex(&asset.shape_basis, 3 * asset.n_shape);
    let pose_basis = per_vertex(&asset.pose_basis, 3 * asset.n_pose_features);
    let expression_basis = per_vertex(&asset.expression_basis, 3 * asset.n_expression);

    let mut skin_weights = per_vertex(&asset.skin_weights, nk);
    for w in skin_weights.chunks_mut(nk) {
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
    }

    // Regressor columns are interpolated like any other per-vertex attribute; each row is
    // then rescaled to its original sum so joints stay weighted averages of vertices.
    let mut joint_regressor = Vec::with_capacity(nk * total);
    for k in 0..nk {
        let row = &asset.joint_regressor[k * nv..(k + 1) * nv];
        let original: f64 = row.iter().sum();
        let mut new_row: Vec<f64> = row.to_vec();
        new_row.extend(new_edges.iter().map(|&(a, b)| 0.5 * (row[a] + row[b])));
        let s: f64 = new_row.iter().sum();
        if s != 0.0 {
            let scale = original / s;
            new_row.iter_mut().for_each(|x| *x *= scale);
        }
        joint_regressor.extend(new_row);
    }

    let mut regions = asset.regions.clone();
    regions.extend(new_edges.iter().map(|&(a, b)| {
        if asset.regions[a] == asset.regions[b] {
            asset.regions[a]
        } else {
            Region::Body
        }
    }));
    let hand_vertices = regions
        .iter()
        .enumerate()
        .filter(|(_, r)| **r == Region::Hand)
        .map(|(i, _)| i)
        .collect();

    let out = BodyModelAsset {
        template,
        faces,
        shape_basis,
        pose_basis,
        expression_basis,
        skin_weights,
        joint_regressor,
        regions,
        hand_vertices,
        ..asset.clone()
    };
    out.validate()?;
    Ok(out)
}
