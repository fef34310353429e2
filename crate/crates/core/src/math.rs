//! Small linear-algebra helpers shared by the body model, canonicalization and rasterizer.

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat4 = Matrix4<f64>;
pub type Mat3x4 = Matrix3x4<f64>;

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

// Series coefficients of the Rodrigues formula R = I + a K + b K^2 with K = skew(r):
// a = sin(t)/t, b = (1 - cos t)/t^2, and their derivatives divided by t.
fn rodrigues_coefficients(theta: f64) -> (f64, f64, f64, f64) {
    let t2 = theta * theta;
    if theta < 1e-4 {
        let a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
        let b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
        let da = -1.0 / 3.0 + t2 / 30.0;
        let db = -1.0 / 12.0 + t2 / 180.0;
        (a, b, da, db)
    } else {
        let (s, c) = theta.sin_cos();
        let a = s / theta;
        let b = (1.0 - c) / t2;
        let da = (theta * c - s) / (t2 * theta);
        let db = (theta * s - 2.0 * (1.0 - c)) / (t2 * t2);
        (a, b, da, db)
    }
}

/// Axis-angle to rotation matrix.
pub fn rodrigues(r: &Vec3) -> Mat3 {
    let (a, b, _, _) = rodrigues_coefficients(r.norm());
    let k = skew(r);
    Mat3::identity() + k * a + k * k * b
}

/// Partial derivatives dR/dr_j for j = 0, 1, 2.
pub fn rodrigues_jacobian(r: &Vec3) -> [Mat3; 3] {
    let (a, b, da, db) = rodrigues_coefficients(r.norm());
    let k = skew(r);
    let k2 = k * k;
    let mut out = [Mat3::zeros(); 3];
    for (j, slot) in out.iter_mut().enumerate() {
        let e = skew(&Vec3::ith(j, 1.0));
        *slot = k * (da * r[j]) + e * a + k2 * (db * r[j]) + (e * k + k * e) * b;
    }
    out
}

/// Pulls a gradient with respect to the rotation matrix back to the axis-angle vector.
pub fn rodrigues_backward(r: &Vec3, d_rot: &Mat3) -> Vec3 {
    let jac = rodrigues_jacobian(r);
    Vec3::new(
        jac[0].component_mul(d_rot).sum(),
        jac[1].component_mul(d_rot).sum(),
        jac[2].component_mul(d_rot).sum(),
    )
}

pub fn affine(rot: &Mat3, t: &Vec3) -> Mat4 {
    let mut m = Mat4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(rot);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
    m
}

pub fn translation(t: &Vec3) -> Mat4 {
    affine(&Mat3::identity(), t)
}

pub fn rot_part(m: &Mat4) -> Mat3 {
    m.fixed_view::<3, 3>(0, 0).into_owned()
}

pub fn trans_part(m: &Mat4) -> Vec3 {
    m.fixed_view::<3, 1>(0, 3).into_owned()
}

pub fn top_rows(m: &Mat4) -> Mat3x4 {
    m.fixed_view::<3, 4>(0, 0).into_owned()
}

/// Applies an affine 4x4 transform to a point.
pub fn transform_point(m: &Mat4, p: &Vec3) -> Vec3 {
    let h = m * Vector4::new(p.x, p.y, p.z, 1.0);
    Vec3::new(h.x, h.y, h.z)
}

pub fn apply_3x4(m: &Mat3x4, p: &Vec3) -> Vec3 {
    m * Vector4::new(p.x, p.y, p.z, 1.0)
}

/// Inverse of an affine transform with invertible linear block.
pub fn affine_inverse(m: &Mat4) -> Option<Mat4> {
    let r = rot_part(m);
    let r_inv = r.try_inverse()?;
    let t = trans_part(m);
    Some(affine(&r_inv, &(-(r_inv * t))))
}

pub fn homogeneous(p: &Vec3) -> Vector4<f64> {
    Vector4::new(p.x, p.y, p.z, 1.0)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}
