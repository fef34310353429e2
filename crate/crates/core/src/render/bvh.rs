use crate::math::Vec3;

use super::camera::Ray;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub face: usize,
    /// weights of the face's three vertices
    pub bary: [f64; 3],
    pub t: f64,
}

impl Hit {
    fn better_than(&self, other: &Hit) -> bool {
        self.t < other.t || (self.t == other.t && self.face < other.face)
    }
}

/// Watertight ray/triangle test. Both face orientations are hit; edges count as inside.
pub fn intersect_triangle(ray: &Ray, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<([f64; 3], f64)> {
    let d = ray.direction;
    let kz = d.iamax();
    let mut kx = (kz + 1) % 3;
    let mut ky = (kx + 1) % 3;
    if d[kz] < 0.0 {
        std::mem::swap(&mut kx, &mut ky);
    }
    let sx = d[kx] / d[kz];
    let sy = d[ky] / d[kz];
    let sz = 1.0 / d[kz];
    let (pa, pb, pc) = (a - ray.origin, b - ray.origin, c - ray.origin);
    let ax = pa[kx] - sx * pa[kz];
    let ay = pa[ky] - sy * pa[kz];
    let bx = pb[kx] - sx * pb[kz];
    let by = pb[ky] - sy * pb[kz];
    let cx = pc[kx] - sx * pc[kz];
    let cy = pc[ky] - sy * pc[kz];
    let u = cx * by - cy * bx;
    let v = ax * cy - ay * cx;
    let w = bx * ay - by * ax;
    if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
        return None;
    }
    let det = u + v + w;
    if det == 0.0 {
        return None;
    }
    let t = (u * sz * pa[kz] + v * sz * pb[kz] + w * sz * pc[kz]) / det;
    Some(([u / det, v / det, w / det], t))
}

fn face_hit(ray: &Ray, vertices: &[Vec3], face: &[usize; 3], index: usize) -> Option<Hit> {
    let (bary, t) = intersect_triangle(ray, &vertices[face[0]], &vertices[face[1]], &vertices[face[2]])?;
    (t > ray.near && t <= ray.far).then_some(Hit { face: index, bary, t })
}

/// Nearest hit by testing every face.
pub fn intersect_brute_force(ray: &Ray, vertices: &[Vec3], faces: &[[usize; 3]]) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (i, f) in faces.iter().enumerate() {
        if let Some(h) = face_hit(ray, vertices, f, i) {
            if best.map_or(true, |b| h.better_than(&b)) {
                best = Some(h);
            }
        }
    }
    best
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self { min: Vec3::repeat(f64::INFINITY), max: Vec3::repeat(f64::NEG_INFINITY) }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn hit(&self, ray: &Ray, inv: &Vec3, t_max: f64) -> bool {
        let mut lo = ray.near;
        let mut hi = t_max;
        for a in 0..3 {
            if ray.direction[a] == 0.0 {
                if ray.origin[a] < self.min[a] || ray.origin[a] > self.max[a] {
                    return false;
                }
                continue;
            }
            let t0 = (self.min[a] - ray.origin[a]) * inv[a];
            let t1 = (self.max[a] - ray.origin[a]) * inv[a];
            lo = lo.max(t0.min(t1));
            hi = hi.min(t0.max(t1));
        }
        lo <= hi
    }
}

#[derive(Clone, Debug)]
struct Node {
    bounds: Aabb,
    // leaf: faces[start..start+count]; interior: children at left, left + 1
    start: usize,
    count: usize,
    left: usize,
}

/// Bounding volume hierarchy over a triangle mesh.
#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

const LEAF_SIZE: usize = 4;
// conservative box padding; exact answers come from the triangle test
const PAD: f64 = 1e-9;

impl Bvh {
    pub fn build(vertices: &[Vec3], faces: &[[usize; 3]]) -> Self {
        let centroids: Vec<Vec3> = faces
            .iter()
            .map(|f| (vertices[f[0]] + vertices[f[1]] + vertices[f[2]]) / 3.0)
            .collect();
        let mut bvh = Self {
            nodes: Vec::with_capacity(2 * faces.len() / LEAF_SIZE + 1),
            order: (0..faces.len()).collect(),
            vertices: vertices.to_vec(),
            faces: faces.to_vec(),
        };
        bvh.nodes.push(Node { bounds: Aabb::empty(), start: 0, count: faces.len(), left: 0 });
        let mut stack = vec![0];
        while let Some(n) = stack.pop() {
            let (start, count) = (bvh.nodes[n].start, bvh.nodes[n].count);
            let mut bounds = Aabb::empty();
            let mut cbounds = Aabb::empty();
            for &f in &bvh.order[start..start + count] {
                for &v in &faces[f] {
                    bounds.grow(&vertices[v]);
                }
                cbounds.grow(&centroids[f]);
            }
            bounds.min -= Vec3::repeat(PAD);
            bounds.max += Vec3::repeat(PAD);
            bvh.nodes[n].bounds = bounds;
            if count <= LEAF_SIZE {
                continue;
            }
            let axis = (cbounds.max - cbounds.min).iamax();
            let slice = &mut bvh.order[start..start + count];
            slice.sort_by(|a, b| centroids[*a][axis].total_cmp(&centroids[*b][axis]).then(a.cmp(b)));
            let half = count / 2;
            let left = bvh.nodes.len();
            bvh.nodes.push(Node { bounds: Aabb::empty(), start, count: half, left: 0 });
            bvh.nodes.push(Node { bounds: Aabb::empty(), start: start + half, count: count - half, left: 0 });
            bvh.nodes[n].count = 0;
            bvh.nodes[n].left = left;
            stack.push(left);
            stack.push(left + 1);
        }
        bvh
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        if self.faces.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z);
        let mut best: Option<Hit> = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let t_max = best.map_or(ray.far, |b| b.t);
            if !node.bounds.hit(ray, &inv, t_max) {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start..node.start + node.count] {
                    if let Some(h) = face_hit(ray, &self.vertices, &self.faces[f], f) {
                        if best.map_or(true, |b| h.better_than(&b)) {
                            best = Some(h);
                        }
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.left + 1);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_model::toy_body;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn down_z(x: f64, y: f64) -> Ray {
        Ray { origin: Vec3::new(x, y, 0.0), direction: Vec3::new(0.0, 0.0, 1.0), near: -1.0, far: 1.0 }
    }

    #[test]
    fn centroid_hit_has_equal_barycentrics() {
        let (a, b, c) = (Vec3::new(0.0, 0.0, 0.2), Vec3::new(1.0, 0.0, 0.2), Vec3::new(0.0, 1.0, 0.2));
        let (bary, t) = intersect_triangle(&down_z(1.0 / 3.0, 1.0 / 3.0), &a, &b, &c).unwrap();
        assert!(bary.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-12));
        assert!((t - 0.2).abs() < 1e-15);
    }

    #[test]
    fn parallel_ray_misses() {
        let (a, b, c) = (Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0));
        assert!(intersect_triangle(&down_z(0.0, 0.2), &a, &b, &c).is_none());
    }

    #[test]
    fn shared_edge_is_never_missed() {
        // two triangles sharing the diagonal of a unit square
        let v = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let faces = [[0, 1, 2], [0, 2, 3]];
        for i in 1..100 {
            let s = i as f64 / 100.0;
            assert!(intersect_brute_force(&down_z(s, s), &v, &faces).is_some());
        }
    }

    #[test]
    fn bvh_matches_brute_force_on_random_rays() {
        let asset = toy_body();
        let verts: Vec<Vec3> = asset.template.iter().map(|p| Vec3::from(*p)).collect();
        let faces = &asset.faces[..500];
        let bvh = Bvh::build(&verts, faces);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut hits = 0;
        for _ in 0..10_000 {
            let o = Vec3::new(rng.gen_range(-0.4..0.4), rng.gen_range(-1.0..1.0), rng.gen_range(-0.6..0.6));
            let d = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
            let ray = Ray { origin: o, direction: d, near: -2.0, far: 2.0 };
            let a = bvh.intersect(&ray);
            let b = intersect_brute_force(&ray, &verts, faces);
            assert_eq!(a.map(|h| h.face), b.map(|h| h.face));
            if let (Some(a), Some(b)) = (a, b) {
                assert!((a.t - b.t).abs() <= 1e-9);
                hits += 1;
            }
        }
        assert!(hits > 1000);
    }
}
