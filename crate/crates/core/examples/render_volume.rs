//! Renders a translucent spherical shell around the toy body, composited against the mesh,
//! and writes the image and the volume opacity.
//!
//! cargo run --release --example render_volume -- out_dir

use std::path::PathBuf;

use hybrid_avatar::body_model::{pose_body, toy_body, BodyParams};
use hybrid_avatar::math::Vec3;
use hybrid_avatar::render::{render_image, Bvh, Camera, RenderConfig, ShellField};

fn main() -> hybrid_avatar::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "renders".into()));
    std::fs::create_dir_all(&out)?;
    let asset = toy_body();
    let posed = pose_body(&BodyParams::zeros(&asset), &asset)?;
    let bvh = Bvh::build(&posed.vertices, &asset.faces);
    let colors = vec![Vec3::new(0.85, 0.65, 0.5); asset.n_vertices()];
    let shell = ShellField { center: Vec3::new(0.0, 0.3, 0.0), radius: 0.3, thickness: 0.06, density: 15.0, color: Vec3::new(0.2, 0.4, 0.9) };
    let camera = Camera::new(1.05, [0.0, 0.0])?;
    let cfg = RenderConfig::default();
    let frame = render_image(&shell, &bvh, &colors, &camera, 96, 96, &cfg, 0)?;
    frame.image.save(&out.join("shell.png"))?;
    frame.mask.save(&out.join("shell_opacity.png"))?;
    let hits = frame.hits.iter().filter(|h| h.is_some()).count();
    println!("{} of {} rays hit the body; mean volume opacity {:.3}", hits, frame.hits.len(), frame.mask.mean());
    Ok(())
}
