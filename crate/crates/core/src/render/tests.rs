use super::*;
use crate::body_model::{pose_body, toy_body, BodyParams};
use rand::{Rng, SeedableRng};

fn toy_scene() -> (Bvh, Vec<Vec3>) {
    let asset = toy_body();
    let posed = pose_body(&BodyParams::zeros(&asset), &asset).unwrap();
    let colors = posed.vertices.iter().map(|v| Vec3::new(0.5 + v.x, 0.5 + 0.5 * v.y, 0.3)).collect();
    (Bvh::build(&posed.vertices, &asset.faces), colors)
}

fn cam() -> Camera {
    Camera::new(1.1, [0.0, 0.0]).unwrap()
}

#[test]
fn transparent_volume_matches_raster_pixelwise() {
    let (bvh, colors) = toy_scene();
    let cfg = RenderConfig { n_coarse: 8, n_fine: 4, ..Default::default() };
    let out = render_image(&Transparent, &bvh, &colors, &cam(), 64, 64, &cfg, 0).unwrap();
    let plan = plan_raster(&bvh, &cam(), 64, 64, cfg.near, cfg.far);
    let r = rasterize_with(&plan, bvh.vertices(), bvh.faces(), &colors, &cam(), cfg.tau_soft);
    for p in 0..64 * 64 {
        assert!((out.image.pixels[p] - r.color[p]).amax() <= 1e-9);
        assert_eq!(out.hits[p].is_some(), plan.hits[p].is_some());
    }
}

#[test]
fn shell_stub_returns_closed_form() {
    let s = ShellField::default();
    assert_eq!(s.eval(&Vec3::new(0.3, 0.0, 0.0), false), (Vec3::new(1.0, 0.0, 0.0), 50.0));
    assert_eq!(s.eval(&Vec3::new(0.0, 0.2, 0.0), false).1, 0.0);
    assert_eq!(s.eval(&Vec3::new(0.0, 0.0, -0.324), true).1, 50.0);
}

#[test]
fn shell_enlarges_silhouette_and_matches_exact_integral() {
    let (bvh, colors) = toy_scene();
    let shell = ShellField { center: Vec3::new(0.0, 0.25, 0.0), ..Default::default() };
    let cfg = RenderConfig { n_coarse: 64, n_fine: 64, ..Default::default() };
    let (w, h) = (48, 48);
    let clothed = render_image(&shell, &bvh, &colors, &cam(), w, h, &cfg, 1).unwrap();
    let naked = render_image(&Transparent, &bvh, &colors, &cam(), w, h, &cfg, 1).unwrap();
    let area = |o: &RenderOutput| (0..w * h).filter(|p| o.hits[*p].is_some() || o.mask.values[*p] > 0.5).count();
    assert!(area(&clothed) > area(&naked) + 50);

    // oracle: exact shell opacity in front of the surface, composited by hand
    let mut err = 0.0;
    for p in 0..w * h {
        let ray = cam().generate_ray(p % w, p / w, w, h, cfg.near, cfg.far);
        let far = naked.hits[p].map_or(cfg.far, |hit| hit.t);
        let opacity = 1.0 - (-shell.optical_depth(&ray, cfg.near, far)).exp();
        let surface = naked.hits[p].map_or(Vec3::zeros(), |hit| surface_color(&hit, bvh.faces(), &colors));
        let expect = shell.color * opacity + surface * (1.0 - opacity);
        err += (clothed.image.pixels[p] - expect).abs().sum() / 3.0;
    }
    let mean = err / (w * h) as f64;
    assert!(mean < 1e-3, "mean abs error {mean}");
}

#[test]
fn render_is_deterministic_and_seed_dependent() {
    let (bvh, colors) = toy_scene();
    let shell = ShellField { center: Vec3::new(0.0, 0.25, 0.0), ..Default::default() };
    let cfg = RenderConfig { n_coarse: 16, n_fine: 8, ..Default::default() };
    let a = render_image(&shell, &bvh, &colors, &cam(), 24, 24, &cfg, 5).unwrap();
    let b = render_image(&shell, &bvh, &colors, &cam(), 24, 24, &cfg, 5).unwrap();
    let c = render_image(&shell, &bvh, &colors, &cam(), 24, 24, &cfg, 6).unwrap();
    assert_eq!(a.image, b.image);
    assert_ne!(a.image, c.image);
}

#[test]
fn coarse_only_render_is_defined() {
    let (bvh, colors) = toy_scene();
    let cfg = RenderConfig { n_coarse: 8, n_fine: 0, ..Default::default() };
    let ray = cam().generate_ray(10, 10, 32, 32, cfg.near, cfg.far);
    let r = render_ray(&ShellField::default(), &bvh, &colors, &ray, &cfg, &mut Midpoint).unwrap();
    assert!(r.fine.is_none());
    assert!(r.color.iter().all(|c| c.is_finite()));
}

#[test]
fn far_sample_background_uses_last_radiance() {
    struct Green;
    impl VolumeField for Green {
        fn eval(&self, _x: &Vec3, _fine: bool) -> (Vec3, f64) {
            (Vec3::new(0.0, 1.0, 0.0), 0.0)
        }
    }
    let (bvh, colors) = toy_scene();
    let cfg = RenderConfig { n_coarse: 4, n_fine: 2, background: Background::FarSample, ..Default::default() };
    let ray = cam().generate_ray(0, 0, 32, 32, cfg.near, cfg.far);
    let r = render_ray(&Green, &bvh, &colors, &ray, &cfg, &mut Midpoint).unwrap();
    assert!(r.hit.is_none());
    assert_eq!(r.color, Vec3::new(0.0, 1.0, 0.0));
}

#[test]
fn fine_samples_stay_inside_ray_bounds() {
    let (bvh, colors) = toy_scene();
    let shell = ShellField { center: Vec3::new(0.0, 0.25, 0.0), ..Default::default() };
    let cfg = RenderConfig { n_coarse: 16, n_fine: 16, ..Default::default() };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for _ in 0..200 {
        let ray = cam().generate_ray(rng.gen_range(0..32), rng.gen_range(0..32), 32, 32, cfg.near, cfg.far);
        let r = render_ray(&shell, &bvh, &colors, &ray, &cfg, &mut rng).unwrap();
        let fine = r.fine.unwrap();
        assert_eq!(fine.depths.len(), 32);
        assert!(fine.depths.windows(2).all(|p| p[0] <= p[1]));
        assert!(fine.depths[0] > cfg.near);
        if let Some(h) = r.hit {
            assert_eq!(*fine.depths.last().unwrap(), h.t);
        }
    }
}
