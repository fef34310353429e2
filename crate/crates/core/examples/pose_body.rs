//! Poses the toy body with shape coefficients and a raised arm, then prints where a few
//! joints and the mesh bounds ended up.

use hybrid_avatar::body_model::{pose_body, toy_body, BodyParams};
use hybrid_avatar::math::Vec3;

fn main() -> hybrid_avatar::Result<()> {
    let asset = toy_body();
    println!("toy body: {} vertices, {} faces, {} joints", asset.n_vertices(), asset.n_faces(), asset.n_joints());

    let mut params = BodyParams::zeros(&asset);
    params.beta[0] = 0.5;
    let shoulder = asset.joint_index("l_shoulder").expect("toy body has shoulders");
    params.theta[3 * shoulder + 2] = 1.2;

    let rest = pose_body(&BodyParams::zeros(&asset), &asset)?;
    let posed = pose_body(&params, &asset)?;
    for name in ["pelvis", "l_shoulder", "head"] {
        let k = asset.joint_index(name).unwrap();
        let (a, b) = (rest.joints[k], posed.joints[k]);
        println!("{name:>10}: rest ({:+.3}, {:+.3}, {:+.3}) -> posed ({:+.3}, {:+.3}, {:+.3})", a.x, a.y, a.z, b.x, b.y, b.z);
    }
    let (lo, hi) = posed
        .vertices
        .iter()
        .fold((Vec3::repeat(f64::MAX), Vec3::repeat(f64::MIN)), |(lo, hi), v| (lo.inf(v), hi.sup(v)));
    println!("posed bounds: x [{:.3}, {:.3}]  y [{:.3}, {:.3}]", lo.x, hi.x, lo.y, hi.y);
    Ok(())
}
