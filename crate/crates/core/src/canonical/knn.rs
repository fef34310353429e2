//! Uniform-grid k-nearest-neighbour search over posed vertices.

use crate::math::Vec3;

/// Neighbours ordered by ascending distance, ties broken by lower index.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighbors {
    pub indices: Vec<usize>,
    /// True when the requested count exceeded the number of vertices.
    pub clamped: bool,
}

impl Neighbors {
    pub fn nearest(&self) -> usize {
        self.indices[0]
    }
}

fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

fn insert_top_k(best: &mut Vec<(f64, usize)>, k: usize, cand: (f64, usize)) {
    if best.len() == k && !better(cand, best[k - 1]) {
        return;
    }
    let pos = best.iter().position(|b| better(cand, *b)).unwrap_or(best.len());
    best.insert(pos, cand);
    best.truncate(k);
}

pub fn knn_brute_force(points: &[Vec3], x: &Vec3, k: usize) -> Neighbors {
    let k_eff = k.min(points.len());
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ((p - x).norm_squared(), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Neighbors {
        indices: all.iter().take(k_eff).map(|e| e.1).collect(),
        clamped: k > points.len(),
    }
}

/// Spatial hash over a fixed point set, rebuilt whenever the mesh moves.
#[derive(Clone, Debug)]
pub struct VertexGrid {
    points: Vec<Vec3>,
    origin: Vec3,
    cell: f64,
    dims: [i64; 3],
    starts: Vec<usize>,
    entries: Vec<usize>,
}

impl VertexGrid {
    pub fn new(points: &[Vec3]) -> Self {
        assert!(!points.is_empty(), "vertex grid needs a non-empty mesh");
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = hi - lo;
        let volume = extent.iter().map(|e| e.max(1e-6)).product::<f64>();
        let target_cells = (points.len() as f64 / 2.0).max(1.0);
        let cell = (volume / target_cells).cbrt().max(1e-6);
        let dims = [0, 1, 2].map(|a| ((extent[a] / cell).floor() as i64 + 1).max(1));
        let n_cells = (dims[0] * dims[1] * dims[2]) as usize;
        let mut counts = vec![0usize; n_cells + 1];
        let mut cell_of = Vec::with_capacity(points.len());
        for p in points {
            let c = Self::cell_coords(&lo, cell, p);
            let id = Self::flat(&dims, [
                c[0].clamp(0, dims[0] - 1),
                c[1].clamp(0, dims[1] - 1),
                c[2].clamp(0, dims[2] - 1),
            ]);
            counts[id + 1] += 1;
            cell_of.push(id);
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut entries = vec![0usize; points.len()];
        for (i, id) in cell_of.iter().enumerate() {
            entries[fill[*id]] = i;
            fill[*id] += 1;
        }
        VertexGrid {
            points: points.to_vec(),
            origin: lo,
            cell,
            dims,
            starts,
            entries,
        }
    }

    fn cell_coords(origin: &Vec3, cell: f64, p: &Vec3) -> [i64; 3] {
        [0, 1, 2].map(|a| ((p[a] - origin[a]) / cell).floor() as i64)
    }

    fn flat(dims: &[i64; 3], c: [i64; 3]) -> usize {
        ((c[2] * dims[1] + c[1]) * dims[0] + c[0]) as usize
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn knn(&self, x: &Vec3, k: usize) -> Neighbors {
        let n = self.points.len();
        let k_eff = k.min(n).max(1);
        let q = Self::cell_coords(&self.origin, self.cell, x);
        // first ring that touches the grid
        let mut r_start = 0;
        for a in 0..3 {
            if q[a] < 0 {
                r_start = r_start.max(-q[a]);
            } else if q[a] >= self.dims[a] {
                r_start = r_start.max(q[a] - self.dims[a] + 1);
            }
        }
        let r_max = (0..3)
            .map(|a| (q[a]).abs().max((q[a] - self.dims[a] + 1).abs()))
            .max()
            .unwrap();
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k_eff + 1);
        let mut r = r_start;
        loop {
            self.visit_ring(q, r, x, k_eff, &mut best);
            if r >= r_max {
                break;
            }
            if best.len() == k_eff {
                // closest possible point outside the (2r+1)^3 block around q
                let mut bound = f64::INFINITY;
                for a in 0..3 {
                    let lo = self.origin[a] + (q[a] - r) as f64 * self.cell;
                    let hi = self.origin[a] + (q[a] + r + 1) as f64 * self.cell;
                    bound = bound.min(x[a] - lo).min(hi - x[a]);
                }
                let bound = bound.max(0.0);
                if best[k_eff - 1].0 < bound * bound {
                    break;
                }
            }
            r += 1;
        }
        Neighbors {
            indices: best.into_iter().map(|b| b.1).collect(),
            clamped: k > n,
        }
    }

    fn visit_ring(&self, q: [i64; 3], r: i64, x: &Vec3, k: usize, best: &mut Vec<(f64, usize)>) {
        let lo = [0, 1, 2].map(|a| (q[a] - r).max(0));
        let hi = [0, 1, 2].map(|a| (q[a] + r).min(self.dims[a] - 1));
        if (0..3).any(|a| lo[a] > hi[a]) {
            return;
        }
        for cz in lo[2]..=hi[2] {
            for cy in lo[1]..=hi[1] {
                for cx in lo[0]..=hi[0] {
                    let cheb = (cx - q[0]).abs().max((cy - q[1]).abs()).max((cz - q[2]).abs());
                    if cheb != r {
                        continue;
                    }
                    let id = Self::flat(&self.dims, [cx, cy, cz]);
                    for &i in &self.entries[self.starts[id]..self.starts[id + 1]] {
                        let d = (self.points[i] - x).norm_squared();
                        insert_top_k(best, k, (d, i));
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_matches_brute_force_on_toy_mesh() {
        let asset = crate::body_model::toy_body();
        let pts: Vec<Vec3> = asset.template.iter().map(|t| Vec3::from(*t)).collect();
        let grid = VertexGrid::new(&pts);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.7..0.7));
            for k in [1, 6] {
                assert_eq!(grid.knn(&x, k), knn_brute_force(&pts, &x, k));
            }
        }
    }

    #[test]
    fn query_at_vertex_returns_it_first() {
        let asset = crate::body_model::toy_body();
        let pts: Vec<Vec3> = asset.template.iter().map(|t| Vec3::from(*t)).collect();
        let grid = VertexGrid::new(&pts);
        for i in (0..pts.len()).step_by(37) {
            assert_eq!(grid.knn(&pts[i], 6).nearest(), i);
        }
    }

    #[test]
    fn k_at_least_n_returns_everything_sorted() {
        let pts: Vec<Vec3> = (0..9).map(|i| Vec3::new(i as f64 * 0.1, 0.0, 0.0)).collect();
        let grid = VertexGrid::new(&pts);
        let n = grid.knn(&Vec3::new(-1.0, 0.0, 0.0), 9);
        assert_eq!(n.indices, (0..9).collect::<Vec<_>>());
        assert!(!n.clamped);
        let n = grid.knn(&Vec3::new(5.0, 0.0, 0.0), 20);
        assert_eq!(n.indices, (0..9).rev().collect::<Vec<_>>());
        assert!(n.clamped);
    }

    #[test]
    fn ties_break_by_lower_index() {
        let pts = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let grid = VertexGrid::new(&pts);
        assert_eq!(grid.knn(&Vec3::zeros(), 2).indices, vec![0, 1]);
    }
}
