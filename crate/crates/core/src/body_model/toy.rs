//! Procedurally generated stand-in bodies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::asset::{BodyModelAsset, Region, ASSET_FORMAT, ASSET_VERSION};
use crate::math::Vec3;

pub const TOY_JOINTS: [&str; 8] = [
    "pelvis",
    "spine",
    "head",
    "l_shoulder",
    "r_shoulder",
    "l_hip",
    "r_hip",
    "jaw",
];
const PELVIS: usize = 0;
const SPINE: usize = 1;
const HEAD: usize = 2;
const L_SHOULDER: usize = 3;
const R_SHOULDER: usize = 4;
const L_HIP: usize = 5;
const R_HIP: usize = 6;
const JAW: usize = 7;

#[derive(Clone, Copy, PartialEq)]
enum Part {
    Torso,
    Head,
    Arm(f64),
    Leg(f64),
}

struct Tube {
    part: Part,
    top: Vec3,
    bottom: Vec3,
    rx: f64,
    rz: f64,
    rings: usize,
    segments: usize,
}

struct Builder {
    template: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    parts: Vec<Part>,
    // distance from the tube top, and the radial direction in the xz plane
    along: Vec<f64>,
    radial: Vec<Vec3>,
    rings: Vec<Vec<usize>>,
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

impl Builder {
    fn push(&mut self, p: Vec3, part: Part, along: f64, radial: Vec3) -> usize {
        self.template.push([p.x, p.y, p.z]);
        self.parts.push(part);
        self.along.push(along);
        self.radial.push(radial);
        self.template.len() - 1
    }

    fn tube(&mut self, t: &Tube) {
        let length = (t.top - t.bottom).norm();
        let mut ring_ids = Vec::with_capacity(t.rings);
        for j in 0..t.rings {
            let s = j as f64 / (t.rings - 1) as f64;
            let centre = t.top + (t.bottom - t.top) * s;
            let scale = match t.part {
                Part::Head => 0.55 + 0.45 * (std::f64::consts::PI * s).sin(),
                _ => 1.0,
            };
            let ids: Vec<usize> = (0..t.segments)
                .map(|k| {
                    let phi = 2.0 * std::f64::consts::PI * k as f64 / t.segments as f64;
                    let radial = Vec3::new(phi.cos(), 0.0, phi.sin());
                    let p = centre
                        + Vec3::new(scale * t.rx * phi.cos(), 0.0, scale * t.rz * phi.sin());
                    self.push(p, t.part, s * length, radial)
                })
                .collect();
            ring_ids.push(ids);
        }
        let cap_top = self.push(t.top, t.part, 0.0, Vec3::zeros());
        let cap_bottom = self.push(t.bottom, t.part, length, Vec3::zeros());
        let n = t.segments;
        let mut faces = Vec::new();
        for j in 0..t.rings - 1 {
            for k in 0..n {
                let (a, b) = (ring_ids[j][k], ring_ids[j][(k + 1) % n]);
                let (c, d) = (ring_ids[j + 1][k], ring_ids[j + 1][(k + 1) % n]);
                faces.push([a, c, b]);
                faces.push([b, c, d]);
            }
        }
        for k in 0..n {
            faces.push([cap_top, ring_ids[0][k], ring_ids[0][(k + 1) % n]]);
            faces.push([cap_bottom, ring_ids[t.rings - 1][(k + 1) % n], ring_ids[t.rings - 1][k]]);
        }
        // orient every face away from the tube axis (caps along the axis)
        let axis = (t.bottom - t.top).normalize();
        for f in faces.iter_mut() {
            let p: Vec<Vec3> = f.iter().map(|&i| Vec3::from(self.template[i])).collect();
            let normal = (p[1] - p[0]).cross(&(p[2] - p[0]));
            let centroid = (p[0] + p[1] + p[2]) / 3.0;
            let rel = centroid - t.top;
            let along = rel.dot(&axis);
            let outward = if f.contains(&cap_top) {
                -axis
            } else if f.contains(&cap_bottom) {
                axis
            } else {
                rel - axis * along
            };
            if normal.dot(&outward) < 0.0 {
                f.swap(1, 2);
            }
        }
        self.faces.extend(faces);
        self.rings.extend(ring_ids);
    }
}

/// Articulated cylinder body: torso, head, two arms, two legs; 688 vertices and 8 joints,
/// 4 shape components and 2 expression components. Rest pose has the arms hanging down;
/// the subject faces -z and +x is the subject's left.
pub fn toy_body() -> BodyModelAsset {
    let mut b = Builder {
        template: Vec::new(),
        faces: Vec::new(),
        parts: Vec::new(),
        along: Vec::new(),
        radial: Vec::new(),
        rings: Vec::new(),
    };
    let tubes = [
        Tube {
            part: Part::Torso,
            top: Vec3::new(0.0, 0.55, 0.0),
            bottom: Vec3::new(0.0, -0.05, 0.0),
            rx: 0.15,
            rz: 0.10,
            rings: 13,
            segments: 16,
        },
        Tube {
            part: Part::Head,
            top: Vec3::new(0.0, 0.84, 0.0),
            bottom: Vec3::new(0.0, 0.58, 0.0),
            rx: 0.085,
            rz: 0.095,
            rings: 7,
            segments: 12,
        },
        Tube {
            part: Part::Arm(1.0),
            top: Vec3::new(0.23, 0.50, 0.0),
            bottom: Vec3::new(0.23, -0.12, 0.0),
            rx: 0.045,
            rz: 0.045,
            rings: 12,
            segments: 8,
        },
        Tube {
            part: Part::Arm(-1.0),
            top: Vec3::new(-0.23, 0.50, 0.0),
            bottom: Vec3::new(-0.23, -0.12, 0.0),
            rx: 0.045,
            rz: 0.045,
            rings: 12,
            segments: 8,
        },
        Tube {
            part: Part::Leg(1.0),
            top: Vec3::new(0.08, -0.02, 0.0),
            bottom: Vec3::new(0.08, -0.85, 0.0),
            rx: 0.065,
            rz: 0.065,
            rings: 12,
            segments: 8,
        },
        Tube {
            part: Part::Leg(-1.0),
            top: Vec3::new(-0.08, -0.02, 0.0),
            bottom: Vec3::new(-0.08, -0.85, 0.0),
            rx: 0.065,
            rz: 0.065,
            rings: 12,
            segments: 8,
        },
    ];
    for t in &tubes {
        b.tube(t);
    }

    let nv = b.template.len();
    let nk = TOY_JOINTS.len();
    let mut weights = vec![0.0; nv * nk];
    let mut regions = vec![Region::Body; nv];
    for i in 0..nv {
        let p = Vec3::from(b.template[i]);
        let w = &mut weights[i * nk..(i + 1) * nk];
        match b.parts[i] {
            Part::Torso => {
                let spine = smoothstep((p.y - 0.05) / 0.3);
                let head = 0.5 * smoothstep((p.y - 0.48) / 0.07);
                w[PELVIS] = 1.0 - spine;
                w[SPINE] = spine - head;
                w[HEAD] = head;
            }
            Part::Head => {
                if p.z < -0.02 {
                    regions[i] = Region::Face;
                }
                if p.z < -0.03 && p.y < 0.68 {
                    w[JAW] = 0.6;
                    w[HEAD] = 0.4;
                } else {
                    w[HEAD] = 1.0;
                }
            }
            Part::Arm(side) => {
                let joint = if side > 0.0 { L_SHOULDER } else { R_SHOULDER };
                let t = smoothstep(b.along[i] / 0.08);
                w[joint] = t;
                w[SPINE] = 1.0 - t;
                if b.along[i] > 0.52 {
                    regions[i] = Region::Hand;
                }
            }
            Part::Leg(side) => {
                let joint = if side > 0.0 { L_HIP } else { R_HIP };
                let t = smoothstep(b.along[i] / 0.08);
                w[joint] = t;
                w[PELVIS] = 1.0 - t;
            }
        }
    }

    // joints regress as centroids of designated rings
    let ring_at = |part: Part, y: f64| -> &Vec<usize> {
        b.rings
            .iter()
            .filter(|r| b.parts[r[0]] == part)
            .min_by(|r1, r2| {
                let d1 = (b.template[r1[0]][1] - y).abs();
                let d2 = (b.template[r2[0]][1] - y).abs();
                d1.total_cmp(&d2)
            })
            .expect("ring")
    };
    let joint_rings = [
        ring_at(Part::Torso, 0.0),
        ring_at(Part::Torso, 0.25),
        ring_at(Part::Torso, 0.55),
        ring_at(Part::Arm(1.0), 0.50),
        ring_at(Part::Arm(-1.0), 0.50),
        ring_at(Part::Leg(1.0), -0.02),
        ring_at(Part::Leg(-1.0), -0.02),
        ring_at(Part::Head, 0.62),
    ];
    let mut regressor = vec![0.0; nk * nv];
    for (k, ring) in joint_rings.iter().enumerate() {
        for &i in ring.iter() {
            regressor[k * nv + i] = 1.0 / ring.len() as f64;
        }
    }

    let n_shape = 4;
    let mut shape = vec![0.0; nv * 3 * n_shape];
    let n_expr = 2;
    let mut expr = vec![0.0; nv * 3 * n_expr];
    let n_pose = 9 * (nk - 1);
    let mut pose = vec![0.0; nv * 3 * n_pose];
    for i in 0..nv {
        let p = Vec3::from(b.template[i]);
        let radial = b.radial[i];
        let set = |basis: &mut Vec<f64>, n: usize, c: usize, d: Vec3| {
            for a in 0..3 {
                basis[(i * 3 + a) * n + c] = d[a];
            }
        };
        // height
        set(&mut shape, n_shape, 0, Vec3::new(0.0, 0.1 * p.y, 0.0));
        match b.parts[i] {
            Part::Torso => {
                set(&mut shape, n_shape, 1, Vec3::new(0.2 * p.x, 0.0, 0.2 * p.z));
                let top = smoothstep(p.y / 0.5);
                set(&mut shape, n_shape, 3, Vec3::new(0.1 * p.x * top, 0.0, 0.0));
            }
            Part::Leg(_) => {
                set(&mut shape, n_shape, 1, radial * 0.2 * 0.065);
                set(&mut shape, n_shape, 2, radial * 0.25 * 0.065);
            }
            Part::Arm(side) => {
                set(&mut shape, n_shape, 2, radial * 0.25 * 0.045);
                set(&mut shape, n_shape, 3, Vec3::new(0.03 * side, 0.0, 0.0));
            }
            Part::Head => {
                if regions[i] == Region::Face {
                    if p.y < 0.68 {
                        set(&mut expr, n_expr, 0, Vec3::new(0.0, -0.02, 0.0));
                    }
                    set(&mut expr, n_expr, 1, Vec3::new(0.05 * p.x, 0.0, 0.0));
                }
            }
        }
        // corrective bulge in skinning blend zones, driven by the diagonal of (R - I)
        for j in 1..nk {
            let w = weights[i * nk + j];
            let bulge = 4.0 * w * (1.0 - w);
            if bulge > 0.0 {
                for d in 0..3 {
                    set(&mut pose, n_pose, 9 * (j - 1) + 4 * d, radial * (-0.03 * bulge));
                }
            }
        }
    }

    let hand_vertices = (0..nv).filter(|&i| regions[i] == Region::Hand).collect();
    let asset = BodyModelAsset {
        format: ASSET_FORMAT.to_string(),
        version: ASSET_VERSION,
        template: b.template,
        faces: b.faces,
        n_shape,
        shape_basis: shape,
        n_pose_features: n_pose,
        pose_basis: pose,
        n_expression: n_expr,
        expression_basis: expr,
        skin_weights: weights,
        joint_regressor: regressor,
        parents: vec![None, Some(0), Some(1), Some(1), Some(1), Some(0), Some(0), Some(2)],
        joint_names: TOY_JOINTS.iter().map(|s| s.to_string()).collect(),
        regions,
        hand_vertices,
    };
    debug_assert!(asset.validate().is_ok());
    asset
}

/// Small random asset for numerical tests: random geometry, bases, weights and a random tree.
pub fn random_asset(n_vertices: usize, n_joints: usize, seed: u64) -> BodyModelAsset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let template: Vec<[f64; 3]> = (0..n_vertices)
        .map(|_| [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)])
        .collect();
    let faces = (0..n_vertices.saturating_sub(2))
        .step_by(3)
        .map(|i| [i, i + 1, i + 2])
        .collect();
    let n_shape = 3;
    let n_expr = 2;
    let n_pose = 9 * (n_joints - 1);
    let mut basis = |n: usize, scale: f64| -> Vec<f64> {
        (0..n_vertices * 3 * n).map(|_| rng.gen_range(-scale..scale)).collect()
    };
    let shape_basis = basis(n_shape, 0.05);
    let pose_basis = basis(n_pose, 0.02);
    let expression_basis = basis(n_expr, 0.03);
    let mut skin_weights = Vec::with_capacity(n_vertices * n_joints);
    for _ in 0..n_vertices {
        let w: Vec<f64> = (0..n_joints).map(|_| rng.gen_range(0.0..1.0f64).powi(3)).collect();
        let s: f64 = w.iter().sum();
        skin_weights.extend(w.iter().map(|x| x / s));
    }
    let mut joint_regressor = Vec::with_capacity(n_joints * n_vertices);
    for _ in 0..n_joints {
        let w: Vec<f64> = (0..n_vertices).map(|_| rng.gen_range(0.0..1.0)).collect();
        let s: f64 = w.iter().sum();
        joint_regressor.extend(w.iter().map(|x| x / s));
    }
    let parents = (0..n_joints)
        .map(|k| if k == 0 { None } else { Some(rng.gen_range(0..k)) })
        .collect();
    let regions: Vec<Region> = (0..n_vertices)
        .map(|i| match i % 3 {
            0 => Region::Body,
            1 => Region::Face,
            _ => Region::Hand,
        })
        .collect();
    let hand_vertices = (0..n_vertices).filter(|&i| regions[i] == Region::Hand).collect();
    BodyModelAsset {
        format: ASSET_FORMAT.to_string(),
        version: ASSET_VERSION,
        template,
        faces,
        n_shape,
        shape_basis,
        n_pose_features: n_pose,
        pose_basis,
        n_expression: n_expr,
        expression_basis,
        skin_weights,
        joint_regressor,
        parents,
        joint_names: (0..n_joints).map(|k| format!("joint{k}")).collect(),
        regions,
        hand_vertices,
    }
}
