//! Maps points near a posed body back into the canonical star pose.

use std::sync::Arc;

use hybrid_avatar::body_model::{pose_body, toy_body, BodyParams};
use hybrid_avatar::canonical::{CanonicalBody, CanonicalConfig, CanonicalFrame};
use hybrid_avatar::math::Vec3;

fn main() -> hybrid_avatar::Result<()> {
    let asset = Arc::new(toy_body());
    let cfg = CanonicalConfig::for_asset(&asset);
    let canonical = Arc::new(CanonicalBody::new(&asset, &cfg)?);

    let mut theta = vec![0.0; asset.pose_dim()];
    let elbow_side = asset.joint_index("r_shoulder").unwrap();
    theta[3 * elbow_side + 2] = -1.0;
    let posed = pose_body(&BodyParams::with_pose(&asset, &theta), &asset)?;
    let frame = CanonicalFrame::new(asset.clone(), canonical.clone(), &posed)?;

    // a point just outside a hand vertex, and one in front of the chest
    let hand = asset.hand_vertices[0];
    let points = [posed.vertices[hand] + Vec3::new(0.0, 0.0, -0.02), Vec3::new(0.0, 0.3, -0.15)];
    for p in points {
        let s = frame.canonicalize(&p, &cfg)?;
        println!(
            "({:+.3}, {:+.3}, {:+.3}) -> ({:+.3}, {:+.3}, {:+.3}) via {} neighbours, top weight {:.2}",
            p.x, p.y, p.z, s.canonical.x, s.canonical.y, s.canonical.z, s.neighbors.len(), s.coefficients[0]
        );
    }
    println!("canonical hand vertex: {:?}", frame.canonical_vertices()[hand].as_slice());
    Ok(())
}
