use std::collections::HashMap;

use rayon::prelude::*;

use crate::math::{sigmoid, Vec3};

use super::bvh::{Bvh, Hit};
use super::camera::{Camera, CameraGrad, Ray};

/// Discrete choices of one raster pass: per-pixel hits, the outer contour edges of the
/// projected mesh, and each pixel's nearest contour edge. Values are recomputed from
/// geometry by [`rasterize_with`]; the choices themselves are held fixed.
#[derive(Clone, Debug)]
pub struct RasterPlan {
    pub width: usize,
    pub height: usize,
    pub hits: Vec<Option<Hit>>,
    pub edges: Vec<[usize; 2]>,
    pub nearest: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub color: Vec<Vec3>,
    pub silhouette: Vec<f64>,
    /// pixels; negative inside the projected mesh
    pub signed_distance: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RasterGrad {
    pub vertices: Vec<Vec3>,
    pub colors: Vec<Vec3>,
    pub camera: CameraGrad,
}

fn pixel_ray(camera: &Camera, px: f64, py: f64, width: usize, height: usize, near: f64, far: f64) -> Ray {
    let [x, y] = camera.unproject(px, py, width, height);
    Ray { origin: Vec3::new(x, y, 0.0), direction: Vec3::new(0.0, 0.0, 1.0), near, far }
}

fn segment_point(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 { (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    (((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt(), t)
}

/// Edges where the mesh's projected outline can lie: boundary edges and edges between a
/// front- and a back-facing triangle, kept only if one side of the projected edge is empty.
pub fn contour_edges(bvh: &Bvh, camera: &Camera, width: usize, height: usize, near: f64, far: f64) -> Vec<[usize; 2]> {
    let vertices = bvh.vertices();
    let facing: Vec<f64> = bvh
        .faces()
        .iter()
        .map(|f| {
            let (a, b, c) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
            (b - a).cross(&(c - a)).z
        })
        .collect();
    let mut adjacency: HashMap<[usize; 2], Vec<usize>> = HashMap::new();
    for (i, f) in bvh.faces().iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            adjacency.entry([a.min(b), a.max(b)]).or_default().push(i);
        }
    }
    let mut candidates: Vec<[usize; 2]> = adjacency
        .into_iter()
        .filter(|(_, fs)| fs.len() == 1 || fs.iter().any(|f| facing[*f] >= 0.0) != fs.iter().all(|f| facing[*f] >= 0.0))
        .map(|(e, _)| e)
        .collect();
    candidates.sort_unstable();
    candidates
        .into_par_iter()
        .filter(|e| {
            let a = camera.project(&vertices[e[0]], width, height);
            let b = camera.project(&vertices[e[1]], width, height);
            let d = [b[0] - a[0], b[1] - a[1]];
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            if len < 1e-12 {
                return false;
            }
            let n = [-d[1] / len * 0.5, d[0] / len * 0.5];
            let m = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            [1.0, -1.0].iter().any(|sgn| {
                let r = pixel_ray(camera, m[0] + sgn * n[0], m[1] + sgn * n[1], width, height, near, far);
                bvh.intersect(&r).is_none()
            })
        })
        .collect()
}

pub fn plan_raster(bvh: &Bvh, camera: &Camera, width: usize, height: usize, near: f64, far: f64) -> RasterPlan {
    let edges = contour_edges(bvh, camera, width, height, near, far);
    let projected: Vec<[[f64; 2]; 2]> = edges
        .iter()
        .map(|e| [camera.project(&bvh.vertices()[e[0]], width, height), camera.project(&bvh.vertices()[e[1]], width, height)])
        .collect();
    let (hits, nearest): (Vec<_>, Vec<_>) = (0..width * height)
        .into_par_iter()
        .map(|p| {
            let (u, v) = (p % width, p / width);
            let hit = bvh.intersect(&camera.generate_ray(u, v, width, height, near, far));
            let mut best: Option<(f64, usize)> = None;
            for (i, [a, b]) in projected.iter().enumerate() {
                let (d, _) = segment_point([u as f64, v as f64], *a, *b);
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, i));
                }
            }
            (hit, best.map(|b| b.1))
        })
        .unzip();
    RasterPlan { width, height, hits, edges, nearest }
}

pub fn rasterize_with(plan: &RasterPlan, vertices: &[Vec3], faces: &[[usize; 3]], colors: &[Vec3], camera: &Camera, tau_soft: f64) -> Raster {
    let n = plan.width * plan.height;
    let mut color = Vec::with_capacity(n);
    let mut silhouette = Vec::with_capacity(n);
    let mut signed_distance = Vec::with_capacity(n);
    for p in 0..n {
        let (u, v) = ((p % plan.width) as f64, (p / plan.width) as f64);
        let hit = plan.hits[p];
        color.push(match hit {
            Some(h) => {
                let f = faces[h.face];
                colors[f[0]] * h.bary[0] + colors[f[1]] * h.bary[1] + colors[f[2]] * h.bary[2]
            }
            None => Vec3::zeros(),
        });
        let dist = match plan.nearest[p] {
            Some(e) => {
                let [i, j] = plan.edges[e];
                let a = camera.project(&vertices[i], plan.width, plan.height);
                let b = camera.project(&vertices[j], plan.width, plan.height);
                segment_point([u, v], a, b).0
            }
            None => f64::INFINITY,
        };
        let sd = if hit.is_some() { -dist } else { dist };
        signed_distance.push(sd);
        silhouette.push(sigmoid(-sd / tau_soft));
    }
    Raster { color, silhouette, signed_distance }
}

pub fn rasterize_backward(
    plan: &RasterPlan,
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    camera: &Camera,
    tau_soft: f64,
    raster: &Raster,
    d_color: &[Vec3],
    d_silhouette: &[f64],
) -> RasterGrad {
    let mut grad = RasterGrad {
        vertices: vec![Vec3::zeros(); vertices.len()],
        colors: vec![Vec3::zeros(); vertices.len()],
        camera: CameraGrad::default(),
    };
    for p in 0..plan.width * plan.height {
        if let Some(h) = plan.hits[p] {
            let f = faces[h.face];
            for k in 0..3 {
                grad.colors[f[k]] += d_color[p] * h.bary[k];
            }
        }
        let Some(e) = plan.nearest[p] else { continue };
        let s = raster.silhouette[p];
        let d_sd = d_silhouette[p] * -s * (1.0 - s) / tau_soft;
        if d_sd == 0.0 {
            continue;
        }
        let d_dist = if plan.hits[p].is_some() { -d_sd } else { d_sd };
        let [i, j] = plan.edges[e];
        let a = camera.project(&vertices[i], plan.width, plan.height);
        let b = camera.project(&vertices[j], plan.width, plan.height);
        let pix = [(p % plan.width) as f64, (p / plan.width) as f64];
        let (dist, t) = segment_point(pix, a, b);
        if dist == 0.0 {
            continue;
        }
        let q = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        // d dist / d q, with the foot parameter held at its optimum
        let dq = [-(pix[0] - q[0]) / dist * d_dist, -(pix[1] - q[1]) / dist * d_dist];
        let da = [dq[0] * (1.0 - t), dq[1] * (1.0 - t)];
        let db = [dq[0] * t, dq[1] * t];
        grad.vertices[i] += camera.project_backward(&vertices[i], plan.width, plan.height, da, &mut grad.camera);
        grad.vertices[j] += camera.project_backward(&vertices[j], plan.width, plan.height, db, &mut grad.camera);
    }
    grad
}

/// Convenience: plan and evaluate in one step.
pub fn rasterize_mesh(vertices: &[Vec3], faces: &[[usize; 3]], colors: &[Vec3], camera: &Camera, width: usize, height: usize, tau_soft: f64) -> Raster {
    let bvh = Bvh::build(vertices, faces);
    let plan = plan_raster(&bvh, camera, width, height, f64::NEG_INFINITY, f64::INFINITY);
    rasterize_with(&plan, vertices, faces, colors, camera, tau_soft)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_model::{pose_body, toy_body, BodyParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_mesh() -> (Vec<Vec3>, Vec<[usize; 3]>) {
        let asset = toy_body();
        let mut p = BodyParams::zeros(&asset);
        p.theta[3 * 3 + 2] = 0.6;
        p.theta[3 * 4 + 2] = -0.6;
        (pose_body(&p, &asset).unwrap().vertices, asset.faces)
    }

    #[test]
    fn covering_triangle_is_uniformly_red() {
        let v = vec![Vec3::new(-10.0, -10.0, 0.0), Vec3::new(10.0, -10.0, 0.0), Vec3::new(0.0, 10.0, 0.0)];
        let red = vec![Vec3::new(1.0, 0.0, 0.0); 3];
        let r = rasterize_mesh(&v, &[[0, 1, 2]], &red, &Camera::new(1.0, [0.0, 0.0]).unwrap(), 16, 16, 2.0);
        assert!(r.color.iter().all(|c| (c - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12));
        assert!(r.silhouette.iter().all(|s| *s > 0.99));
    }

    #[test]
    fn hard_silhouette_equals_coverage() {
        let (v, f) = toy_mesh();
        let cam = Camera::new(1.1, [0.0, 0.05]).unwrap();
        let bvh = Bvh::build(&v, &f);
        let plan = plan_raster(&bvh, &cam, 64, 64, -0.6, 0.6);
        let r = rasterize_with(&plan, &v, &f, &vec![Vec3::zeros(); v.len()], &cam, 1e-9);
        let mut checked = 0;
        for (p, s) in r.silhouette.iter().enumerate() {
            if r.signed_distance[p].abs() < 1e-6 {
                continue;
            }
            let covered = bvh.intersect(&cam.generate_ray(p % 64, p / 64, 64, 64, -0.6, 0.6)).is_some();
            assert_eq!(*s > 0.5, covered, "pixel {p}");
            checked += 1;
        }
        assert!(checked > 4000);
        assert!(plan.hits.iter().filter(|h| h.is_some()).count() > 300);
    }

    #[test]
    fn soft_silhouette_crosses_half_at_the_outline() {
        let (v, f) = toy_mesh();
        let cam = Camera::new(1.1, [0.0, 0.05]).unwrap();
        let bvh = Bvh::build(&v, &f);
        let plan = plan_raster(&bvh, &cam, 64, 64, -0.6, 0.6);
        let r = rasterize_with(&plan, &v, &f, &vec![Vec3::zeros(); v.len()], &cam, 2.0);
        // every pixel adjacent to a pixel of different coverage is within a couple of pixels of the outline
        for p in 0..64 * 64 {
            let (u, w) = (p % 64, p / 64);
            if u + 1 < 64 && plan.hits[p].is_some() != plan.hits[p + 1].is_some() {
                assert!(r.signed_distance[p].abs() < 2.0 && r.signed_distance[p + 1].abs() < 2.0, "pixel {u},{w}");
            }
        }
    }

    fn scalar(r: &Raster, dc: &[Vec3], ds: &[f64]) -> f64 {
        r.color.iter().zip(dc).map(|(a, b)| a.dot(b)).sum::<f64>() + r.silhouette.iter().zip(ds).map(|(a, b)| a * b).sum::<f64>()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (v, f) = toy_mesh();
        let cam = Camera::new(1.1, [0.02, 0.05]).unwrap();
        let (w, h) = (32, 32);
        let plan = plan_raster(&Bvh::build(&v, &f), &cam, w, h, -0.6, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let colors: Vec<Vec3> = (0..v.len()).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let dc: Vec<Vec3> = (0..w * h).map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let ds: Vec<f64> = (0..w * h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = rasterize_with(&plan, &v, &f, &colors, &cam, 2.0);
        let g = rasterize_backward(&plan, &v, &f, &cam, 2.0, &r, &dc, &ds);
        let eval = |v: &[Vec3], c: &[Vec3], cam: &Camera| scalar(&rasterize_with(&plan, v, &f, c, cam, 2.0), &dc, &ds);
        let step = 1e-6;
        let touched: Vec<usize> = plan.edges.iter().flatten().copied().take(30).collect();
        for &i in &touched {
            for a in 0..3 {
                let (mut p, mut m) = (v.clone(), v.clone());
                p[i][a] += step;
                m[i][a] -= step;
                let fd = (eval(&p, &colors, &cam) - eval(&m, &colors, &cam)) / (2.0 * step);
                assert!((fd - g.vertices[i][a]).abs() <= 1e-5 * (1.0 + fd.abs()), "vertex {i} axis {a}: {fd} vs {}", g.vertices[i][a]);
                let (mut p, mut m) = (colors.clone(), colors.clone());
                p[i][a] += step;
                m[i][a] -= step;
                let fd = (eval(&v, &p, &cam) - eval(&v, &m, &cam)) / (2.0 * step);
                assert!((fd - g.colors[i][a]).abs() <= 1e-6 * (1.0 + fd.abs()));
            }
        }
        let fd = (eval(&v, &colors, &Camera { s: cam.s + step, ..cam }) - eval(&v, &colors, &Camera { s: cam.s - step, ..cam })) / (2.0 * step);
        assert!((fd - g.camera.s).abs() <= 1e-5 * (1.0 + fd.abs()));
        for a in 0..2 {
            let (mut p, mut m) = (cam, cam);
            p.t[a] += step;
            m.t[a] -= step;
            let fd = (eval(&v, &colors, &p) - eval(&v, &colors, &m)) / (2.0 * step);
            assert!((fd - g.camera.t[a]).abs() <= 1e-5 * (1.0 + fd.abs()));
        }
    }
}
