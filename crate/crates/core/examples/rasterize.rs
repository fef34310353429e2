//! Soft-silhouette rasterization of the posed body and the gradient of the silhouette area
//! with respect to the camera scale.

use hybrid_avatar::body_model::{pose_body, toy_body, BodyParams};
use hybrid_avatar::math::Vec3;
use hybrid_avatar::render::{plan_raster, rasterize_backward, rasterize_with, Bvh, Camera};

fn main() -> hybrid_avatar::Result<()> {
    let asset = toy_body();
    let posed = pose_body(&BodyParams::zeros(&asset), &asset)?;
    let colors = vec![Vec3::new(0.8, 0.6, 0.5); asset.n_vertices()];
    let camera = Camera::new(1.0, [0.0, 0.0])?;
    let (w, h, tau) = (48, 48, 1.0);

    let bvh = Bvh::build(&posed.vertices, &asset.faces);
    let plan = plan_raster(&bvh, &camera, w, h, f64::NEG_INFINITY, f64::INFINITY);
    let r = rasterize_with(&plan, &posed.vertices, &asset.faces, &colors, &camera, tau);
    let area: f64 = r.silhouette.iter().sum();
    println!("{} contour edges, soft silhouette area {:.2} px", plan.edges.len(), area);

    let ones = vec![1.0; w * h];
    let zeros = vec![Vec3::zeros(); w * h];
    let g = rasterize_backward(&plan, &posed.vertices, &asset.faces, &camera, tau, &r, &zeros, &ones);
    println!("d area / d scale = {:.2} (positive: zooming in grows the silhouette)", g.camera.s);

    for y in (0..h).step_by(3) {
        let row: String = (0..w).step_by(2).map(|x| if r.silhouette[y * w + x] > 0.5 { '#' } else { '.' }).collect();
        println!("{row}");
    }
    Ok(())
}
