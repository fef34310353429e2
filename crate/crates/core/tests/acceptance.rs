//! Acceptance criteria. Runs without the libtest harness so every criterion prints exactly
//! one PASS/FAIL line; the process exits non-zero if any criterion fails.
//!
//! The end-to-end benchmark (criteria 7 and 8) fits the synthetic subject twice with the
//! built-in benchmark configuration and takes a while on a single core.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use hybrid_avatar::body_model::{pose_body, toy_body, BodyModelAsset, BodyParams};
use hybrid_avatar::canonical::{CanonicalBody, CanonicalConfig, CanonicalFrame};
use hybrid_avatar::fields::FieldId;
use hybrid_avatar::losses::{body_losses, clothing_mask_loss, hand_color, recon_loss, FrameObservation, LossWeights};
use hybrid_avatar::math::Vec3;
use hybrid_avatar::pipeline::{
    evaluate_frame, evaluate_frame_with_offsets, transfer_clothing, AvatarScene, AvatarState, BodyContext, EvalOptions, FrameGrads, FramePlan, Stage,
};
use hybrid_avatar::render::{
    composite, intersect_brute_force, rasterize_mesh, render_image, Bvh, Camera, Image, Mask, Ray, RenderConfig, Transparent,
};
use hybrid_avatar::workbench::cli::Summary;
use hybrid_avatar::workbench::{benchmark_config, generate_synthetic, SynthSpec};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn criterion_1() -> Outcome {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let n = r.gen_range(2..64);
        let mut depths: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        depths.sort_by(f64::total_cmp);
        let densities: Vec<f64> = (0..n).map(|_| if r.gen_bool(0.2) { 0.0 } else { r.gen_range(0.0..200.0f64).powf(r.gen_range(0.5..1.5)) }).collect();
        let colors = vec![Vec3::new(0.5, 0.5, 0.5); n];
        let c = composite(&depths, &colors, &densities, &Vec3::zeros()).map_err(|e| e.to_string())?;
        worst = worst.max((c.alpha.iter().sum::<f64>() + c.tau - 1.0).abs());
    }
    ensure(worst <= 1e-12, || format!("max |sum alpha + tau - 1| = {worst:e}"))?;
    Ok(format!("max |sum alpha + tau - 1| = {worst:.1e} over 1e5 rays"))
}

fn posed_toy(seed: u64, amplitude: f64) -> (BodyModelAsset, Vec<Vec3>) {
    let asset = toy_body();
    let mut r = rng(seed);
    let mut p = BodyParams::zeros(&asset);
    let rot = 3 * asset.n_joints();
    p.theta[..rot].iter_mut().for_each(|v| *v = r.gen_range(-amplitude..amplitude));
    p.beta.iter_mut().for_each(|v| *v = r.gen_range(-0.5..0.5));
    let posed = pose_body(&p, &asset).unwrap();
    (asset, posed.vertices)
}

fn criterion_2() -> Outcome {
    let (asset, vertices) = posed_toy(2, 0.3);
    let mut r = rng(3);
    let colors: Vec<Vec3> = (0..asset.n_vertices()).map(|_| Vec3::new(r.gen(), r.gen(), r.gen())).collect();
    let camera = Camera::new(1.0, [0.02, -0.03]).map_err(|e| e.to_string())?;
    let cfg = RenderConfig::default();
    let bvh = Bvh::build(&vertices, &asset.faces);
    let volume = render_image(&Transparent, &bvh, &colors, &camera, 64, 64, &cfg, 7).map_err(|e| e.to_string())?;
    let raster = rasterize_mesh(&vertices, &asset.faces, &colors, &camera, 64, 64, cfg.tau_soft);
    let worst = volume.image.pixels.iter().zip(&raster.color).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
    let hits = volume.hits.iter().filter(|h| h.is_some()).count();
    ensure(worst <= 1e-9, || format!("max pixel difference {worst:e}"))?;
    ensure(hits > 200, || format!("only {hits} pixels cover the body"))?;
    Ok(format!("max pixel difference {worst:.1e} on 64x64 ({hits} body pixels)"))
}

fn criterion_3() -> Outcome {
    let asset = Arc::new(toy_body());
    let cfg = CanonicalConfig::for_asset(&asset);
    let canonical = Arc::new(CanonicalBody::new(&asset, &cfg).map_err(|e| e.to_string())?);
    let posed = pose_body(&BodyParams::with_pose(&asset, &cfg.pose), &asset).map_err(|e| e.to_string())?;
    let frame = CanonicalFrame::new(asset.clone(), canonical.clone(), &posed).map_err(|e| e.to_string())?;
    let mut r = rng(4);
    let mut identity = 0.0f64;
    for _ in 0..1000 {
        let x = Vec3::new(r.gen_range(-0.8..0.8), r.gen_range(-0.9..0.9), r.gen_range(-0.3..0.3));
        let s = frame.canonicalize(&x, &cfg).map_err(|e| e.to_string())?;
        identity = identity.max((s.canonical - x).amax());
    }
    let mut p = BodyParams::zeros(&asset);
    p.theta.iter_mut().for_each(|v| *v = r.gen_range(-0.5..0.5));
    p.beta.iter_mut().for_each(|v| *v = r.gen_range(-1.0..1.0));
    let observed = pose_body(&p, &asset).map_err(|e| e.to_string())?;
    let frame = CanonicalFrame::new(asset.clone(), canonical.clone(), &observed).map_err(|e| e.to_string())?;
    let mut round_trip = 0.0f64;
    for i in 0..asset.n_vertices() {
        let s = frame.canonicalize_with(&observed.vertices[i], &[i], cfg.sigma).map_err(|e| e.to_string())?;
        round_trip = round_trip.max((s.canonical - canonical.vertices[i]).amax());
    }
    ensure(identity <= 1e-9, || format!("identity error {identity:e}"))?;
    ensure(round_trip <= 1e-9, || format!("k=1 round-trip error {round_trip:e}"))?;
    Ok(format!("identity {identity:.1e} on 1000 points, k=1 round trip {round_trip:.1e} on all vertices"))
}

struct GradientFixture {
    ctx: BodyContext,
    state: AvatarState,
    obs: FrameObservation,
    offsets: Vec<Vec3>,
    cfg: hybrid_avatar::pipeline::RunConfig,
}

impl GradientFixture {
    fn new() -> Self {
        let spec = SynthSpec { frames: 1, size: 24, render: RenderConfig { n_coarse: 48, n_fine: 24, ..RenderConfig::default() }, ..SynthSpec::default() };
        let scene = generate_synthetic(&spec, 11).unwrap();
        let cfg = benchmark_config();
        let poses = scene.frames.iter().map(|f| f.init.clone()).collect();
        let mut state =
            AvatarState::initialize(scene.asset.clone(), &cfg.fields, Some(cfg.canonical(&scene.asset)), vec![0.0; scene.asset.n_shape], poses, 3).unwrap();
        let mut r = rng(12);
        for id in FieldId::ALL {
            state.fields.get_mut(id).params_mut().iter_mut().for_each(|p| *p += r.gen_range(-0.1..0.1));
        }
        state.beta.iter_mut().for_each(|b| *b = r.gen_range(-0.3..0.3));
        let ctx = BodyContext::new(&state.asset, &state.canonical).unwrap();
        let offsets = hybrid_avatar::fields::eval_offsets(&state.fields.offset, &state.asset.template);
        Self { ctx, state, obs: scene.observations[0].clone(), offsets, cfg }
    }

    fn eval(&self, state: &AvatarState, offsets: Option<&[Vec3]>, stage: Stage, plan: &mut FramePlan) -> (f64, FrameGrads) {
        let opts = EvalOptions { stage, weights: &self.cfg.weights, render: &self.cfg.render, deformation: true, perceptual: None, want_grad: true };
        let (r, g) = match offsets {
            Some(o) => evaluate_frame_with_offsets(&self.ctx, &state.fields, &state.beta, &state.frames[0], &self.obs, plan, &opts, o.to_vec()).unwrap(),
            None => evaluate_frame(&self.ctx, &state.fields, &state.beta, &state.frames[0], &self.obs, plan, &opts).unwrap(),
        };
        (r.total(), g.unwrap())
    }
}

/// Pixels covering the subject's bounding box, every third one.
fn subject_pixels(obs: &FrameObservation) -> Vec<usize> {
    (0..obs.n_pixels()).filter(|p| obs.mask.values[*p] > 0.5 || p % 11 == 0).step_by(3).collect()
}

fn criterion_4() -> Outcome {
    let fx = GradientFixture::new();
    let mut plan = FramePlan::new(subject_pixels(&fx.obs), 21);
    let (_, g) = fx.eval(&fx.state, Some(&fx.offsets), Stage::Two, &mut plan);
    let (_, g_d) = fx.eval(&fx.state, None, Stage::Two, &mut plan);
    let h = 1e-5;
    // rounding of the two loss evaluations, divided by the stencil width
    let floor = 4.0 * f64::EPSILON * fx.eval(&fx.state, Some(&fx.offsets), Stage::Two, &mut plan.clone()).0.abs() / h;
    let mut r = rng(13);
    let mut lines = Vec::new();
    let mut failures = Vec::new();

    let mut check = |group: &str, n: usize, analytic: &dyn Fn(usize) -> f64, loss_at: &mut dyn FnMut(usize, f64) -> f64, r: &mut ChaCha8Rng| {
        let picks: Vec<usize> = if n <= 50 { (0..n).collect() } else { index::sample(r, n, 50).into_vec() };
        let mut worst = 0.0f64;
        let mut at_floor = 0;
        for &i in &picks {
            let a = analytic(i);
            let numeric = (loss_at(i, h) - loss_at(i, -h)) / (2.0 * h);
            let scale = a.abs().max(numeric.abs());
            let diff = (a - numeric).abs();
            if diff > 1e-3 * scale + floor {
                failures.push(format!("{group}[{i}]: analytic {a:e} numeric {numeric:e}"));
            }
            if diff > 1e-3 * scale {
                at_floor += 1;
            } else if scale > 0.0 {
                worst = worst.max(diff / scale);
            }
        }
        lines.push(format!("{group} {} coords, worst rel {worst:.1e}, {at_floor} within roundoff", picks.len()));
    };

    let field_groups = [(FieldId::Coarse, "F_c coarse"), (FieldId::Fine, "F_c fine"), (FieldId::Deformation, "F_m"), (FieldId::Texture, "F_t")];
    for (id, name) in field_groups {
        let grad = g.fields.get(id).to_vec();
        let mut at = |i: usize, d: f64| {
            let mut s = fx.state.clone();
            s.fields.get_mut(id).params_mut()[i] += d;
            fx.eval(&s, Some(&fx.offsets), Stage::Two, &mut plan.clone()).0
        };
        check(name, grad.len(), &|i| grad[i], &mut at, &mut r);
    }
    {
        let grad = g_d.fields.offset.clone();
        let mut at = |i: usize, d: f64| {
            let mut s = fx.state.clone();
            s.fields.offset.params_mut()[i] += d;
            fx.eval(&s, None, Stage::Two, &mut plan.clone()).0
        };
        check("F_d", grad.len(), &|i| grad[i], &mut at, &mut r);
    }
    {
        let grad = g.theta.clone();
        let mut at = |i: usize, d: f64| {
            let mut s = fx.state.clone();
            s.frames[0].theta[i] += d;
            fx.eval(&s, Some(&fx.offsets), Stage::Two, &mut plan.clone()).0
        };
        check("theta_f", grad.len(), &|i| grad[i], &mut at, &mut r);
    }
    {
        let grad = g.beta.clone();
        let mut at = |i: usize, d: f64| {
            let mut s = fx.state.clone();
            s.beta[i] += d;
            fx.eval(&s, Some(&fx.offsets), Stage::Two, &mut plan.clone()).0
        };
        check("beta", grad.len(), &|i| grad[i], &mut at, &mut r);
    }
    {
        let grad: Vec<f64> = g.offsets.iter().flat_map(|o| [o.x, o.y, o.z]).collect();
        let mut at = |i: usize, d: f64| {
            let mut o = fx.offsets.clone();
            o[i / 3][i % 3] += d;
            fx.eval(&fx.state, Some(&o), Stage::Two, &mut plan.clone()).0
        };
        check("O", grad.len(), &|i| grad[i], &mut at, &mut r);
    }
    {
        let grad = [g.camera.s, g.camera.t[0], g.camera.t[1]];
        let mut at = |i: usize, d: f64| {
            let mut s = fx.state.clone();
            match i {
                0 => s.frames[0].camera.s += d,
                k => s.frames[0].camera.t[k - 1] += d,
            }
            fx.eval(&s, Some(&fx.offsets), Stage::Two, &mut plan.clone()).0
        };
        check("p_f", 3, &|i| grad[i], &mut at, &mut r);
    }

    // stage one never differentiates the deformation field
    let (_, g1) = fx.eval(&fx.state, Some(&fx.offsets), Stage::One, &mut plan.clone());
    let zero = g1.fields.deformation.iter().all(|v| *v == 0.0);
    if !zero {
        failures.push("stage-1 F_m gradient is not exactly zero".into());
    }
    lines.push(format!("stage-1 F_m exactly zero: {zero}"));
    lines.insert(0, format!("roundoff floor {floor:.1e}"));
    if failures.is_empty() {
        Ok(lines.join("; "))
    } else {
        Err(format!("{} ({})", failures.join("; "), lines.join("; ")))
    }
}

fn criterion_5() -> Outcome {
    let mut r = rng(5);
    let vertices: Vec<Vec3> = (0..1500).map(|_| Vec3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))).collect();
    let faces: Vec<[usize; 3]> = (0..500).map(|f| [3 * f, 3 * f + 1, 3 * f + 2]).collect();
    let bvh = Bvh::build(&vertices, &faces);
    let mut hits = 0;
    for i in 0..10_000 {
        let origin = Vec3::new(r.gen_range(-1.5..1.5), r.gen_range(-1.5..1.5), r.gen_range(-1.5..1.5));
        let direction = Vec3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)).normalize();
        let ray = Ray { origin, direction, near: 0.0, far: 5.0 };
        let (a, b) = (bvh.intersect(&ray), intersect_brute_force(&ray, &vertices, &faces));
        match (a, b) {
            (None, None) => {}
            (Some(a), Some(b)) if a.face == b.face && (a.t - b.t).abs() <= 1e-9 => hits += 1,
            (a, b) => return Err(format!("ray {i}: bvh {a:?} vs brute force {b:?}")),
        }
    }
    ensure(hits > 1000, || format!("only {hits} rays hit anything"))?;
    Ok(format!("10000 rays x 500 faces identical ({hits} hits)"))
}

fn criterion_6() -> Outcome {
    let w = LossWeights::default();
    let mut r = rng(6);
    let n = 64;
    let mut report = Vec::new();
    let mut fixed = |name: &str, at_fixed: f64, perturbed: f64| -> Result<(), String> {
        ensure(at_fixed == 0.0 && perturbed > 0.0, || format!("{name}: fixed point {at_fixed:e}, perturbed {perturbed:e}"))?;
        report.push(name.to_string());
        Ok(())
    };

    let target: Vec<Vec3> = (0..n).map(|_| Vec3::new(r.gen(), r.gen(), r.gen())).collect();
    let mut bumped = target.clone();
    bumped[5].x += 0.2;
    fixed("recon", recon_loss(&target, &target, &w, None).0, recon_loss(&bumped, &target, &w, None).0)?;

    let masks: Vec<f64> = (0..n).map(|i| (i % 3 == 0) as u8 as f64).collect();
    let mut flipped = masks.clone();
    flipped[1] = 1.0 - flipped[1];
    fixed("clothing", clothing_mask_loss(&masks, &masks, &w).0, clothing_mask_loss(&flipped, &masks, &w).0)?;

    // body terms on a 8x8 frame: top rows clothing, bottom rows visible skin, hands pinned
    let (side, hand) = (8usize, Vec3::new(0.8, 0.6, 0.5));
    let s: Vec<f64> = (0..side * side).map(|p| ((p % side) >= 2 && (p % side) < 6) as u8 as f64).collect();
    let sc: Vec<f64> = (0..side * side).map(|p| s[p] * ((p / side) < 4) as u8 as f64).collect();
    let sb: Vec<f64> = s.iter().zip(&sc).map(|(a, b)| a - b).collect();
    let image: Vec<Vec3> = (0..side * side).map(|p| if sb[p] > 0.0 { Vec3::new(0.9, 0.7, 0.6) } else { Vec3::new(0.1, 0.2, 0.9) }).collect();
    let obs = FrameObservation::new(
        Image::from_pixels(side, side, image.clone()).unwrap(),
        Mask::from_values(side, side, s.clone()).unwrap(),
        Mask::from_values(side, side, sc.clone()).unwrap(),
        Mask::from_values(side, side, sb.clone()).unwrap(),
    )
    .unwrap()
    .0;
    let color: Vec<Vec3> = (0..side * side).map(|p| if sc[p] > 0.0 { hand } else { image[p] }).collect();
    let perfect = body_losses(&color, &s, &obs, Some(hand), &w).terms;
    let hand_probe = hand_color(&[hand, hand], &[0, 1]).unwrap();
    ensure(hand_probe == hand, || "hand color average".into())?;

    let skin_px = (0..side * side).find(|p| sb[*p] > 0.0).unwrap();
    let cloth_px = (0..side * side).find(|p| sc[*p] > 0.0).unwrap();
    let outside_px = (0..side * side).find(|p| s[*p] == 0.0).unwrap();

    let mut sil = s.clone();
    sil[outside_px] = 0.6;
    fixed("silhouette", perfect.silhouette, body_losses(&color, &sil, &obs, Some(hand), &w).terms.silhouette)?;
    let mut sil = s.clone();
    sil[skin_px] = 0.4;
    fixed("bodymask", perfect.bodymask, body_losses(&color, &sil, &obs, Some(hand), &w).terms.bodymask)?;
    let mut col = color.clone();
    col[skin_px].y += 0.1;
    fixed("skin", perfect.skin, body_losses(&col, &s, &obs, Some(hand), &w).terms.skin)?;
    let mut sil = s.clone();
    sil[outside_px] = 0.7;
    fixed("inside", perfect.inside, body_losses(&color, &sil, &obs, Some(hand), &w).terms.inside)?;
    let mut col = color.clone();
    col[cloth_px].z -= 0.1;
    fixed("skininside", perfect.skininside, body_losses(&col, &s, &obs, Some(hand), &w).terms.skininside)?;

    // mask rendering: sum of compositing weights equals one minus the product of survivals
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let k = r.gen_range(2..48);
        let mut depths: Vec<f64> = (0..k).map(|_| r.gen_range(0.0..1.0)).collect();
        depths.sort_by(f64::total_cmp);
        let sigma: Vec<f64> = (0..k).map(|_| r.gen_range(0.0..30.0)).collect();
        let c = composite(&depths, &vec![Vec3::zeros(); k], &sigma, &Vec3::zeros()).unwrap();
        let survive: f64 = (0..k - 1).map(|i| (-sigma[i] * (depths[i + 1] - depths[i])).exp()).product();
        worst = worst.max((c.mask() - (1.0 - survive)).abs());
    }
    ensure(worst <= 1e-12, || format!("mask telescoping error {worst:e}"))?;
    Ok(format!("{} zero at fixed point and positive when perturbed; mask telescoping {worst:.1e}", report.join(", ")))
}

fn avatar_bin() -> &'static str {
    env!("CARGO_BIN_EXE_avatar")
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(avatar_bin()).args(args).env("RUST_LOG", "warn").output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("avatar {} failed ({}): {}", args.join(" "), out.status, String::from_utf8_lossy(&out.stderr)))
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn work_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Reference run of the benchmark, frozen: held-out PSNR and clothing leakage.
const REFERENCE_PSNR: f64 = 26.19;
const REFERENCE_LEAKAGE: f64 = 0.00043;
/// Reference held-out PSNR of the run without pose refinement.
const REFERENCE_ABLATED_PSNR: f64 = 23.15;

fn fit_and_eval(root: &Path, data: &Path, name: &str, extra: &[&str]) -> Result<(Summary, Duration), String> {
    let run = root.join(name);
    let start = Instant::now();
    let mut args = vec!["fit", "--data", p(data), "--out", p(&run)];
    args.extend_from_slice(extra);
    run_cli(&args)?;
    let elapsed = start.elapsed();
    let eval = root.join(format!("{name}_eval"));
    run_cli(&["eval", "--data", p(data), "--avatar", p(&run.join("avatar.ckpt")), "--out", p(&eval)])?;
    run_cli(&["plot", "--log", p(&run.join("log.csv")), "--metrics", p(&eval.join("metrics.csv")), "--out", p(&eval)])?;
    let summary: Summary = serde_json::from_str(&std::fs::read_to_string(eval.join("summary.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    Ok((summary, elapsed))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Stage-1 loss drop (iteration 0 over the median of the last 100 stage-1 iterations) and
/// the medians of the first and last 100 iterations of the whole run.
fn loss_trend(log: &Path) -> Result<(f64, f64, f64), String> {
    let mut reader = csv::Reader::from_path(log).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let field = |i: usize| rec[i].parse::<f64>().map_err(|e| e.to_string());
        rows.push((field(0)? as u8, field(2)?));
    }
    ensure(rows.len() >= 200, || format!("only {} logged iterations", rows.len()))?;
    let stage1: Vec<f64> = rows.iter().filter(|r| r.0 == 1).map(|r| r.1).collect();
    let tail1 = median(stage1[stage1.len().saturating_sub(100)..].to_vec());
    let totals: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let first = median(totals[..100].to_vec());
    let last = median(totals[totals.len() - 100..].to_vec());
    Ok((stage1[0] / tail1, first, last))
}

struct Benchmark {
    root: PathBuf,
    refined: Result<(Summary, Duration), String>,
    ablated: Result<(Summary, Duration), String>,
}

fn benchmark(root: &Path) -> Benchmark {
    let data = root.join("data");
    if let Err(e) = run_cli(&["synth", "--out", p(&data), "--seed", "0", "--frames", "25", "--size", "64"]) {
        return Benchmark { root: root.to_path_buf(), refined: Err(e.clone()), ablated: Err(e) };
    }
    Benchmark { root: root.to_path_buf(), refined: fit_and_eval(root, &data, "refined", &[]), ablated: fit_and_eval(root, &data, "ablated", &["--ablate", "pose-refinement"]) }
}

fn criterion_7(b: &Benchmark) -> Outcome {
    let (s, elapsed) = b.refined.clone()?;
    let psnr = s.test_psnr.ok_or("no held-out frames")?;
    let leak = s.test_leakage.ok_or("no held-out frames")?;
    let train = s.train_psnr.unwrap_or(f64::NAN);
    let line = format!("held-out PSNR {psnr:.2} dB (train {train:.2}), leakage {leak:.4}, fit {:.1} min", elapsed.as_secs_f64() / 60.0);
    let (drop, first, last) = loss_trend(&b.root.join("refined").join("log.csv"))?;
    let line = format!("{line}, stage-1 loss drop {drop:.1}x, median loss first/last 100 {first:.3}/{last:.3}");
    ensure(psnr >= 25.0, || format!("{line}: PSNR below 25 dB"))?;
    ensure(drop >= 10.0, || format!("{line}: stage-1 loss fell less than 10x"))?;
    ensure(first > last, || format!("{line}: no burn-in"))?;
    ensure(leak <= 0.05, || format!("{line}: leakage above 0.05"))?;
    ensure(REFERENCE_PSNR.is_nan() || psnr >= REFERENCE_PSNR - 1.0, || format!("{line}: more than 1 dB under the reference {REFERENCE_PSNR:.2}"))?;
    ensure(REFERENCE_LEAKAGE.is_nan() || leak <= REFERENCE_LEAKAGE + 0.01, || format!("{line}: leakage 0.01 over the reference {REFERENCE_LEAKAGE:.4}"))?;
    ensure(elapsed <= Duration::from_secs(30 * 60), || format!("{line}: over 30 minutes"))?;
    Ok(line)
}

fn criterion_8(b: &Benchmark) -> Outcome {
    let refined = b.refined.clone()?.0.test_psnr.ok_or("no held-out frames")?;
    let ablated = b.ablated.clone()?.0.test_psnr.ok_or("no held-out frames")?;
    let line = format!("held-out PSNR refined {refined:.2} dB vs frozen pose {ablated:.2} dB");
    ensure(ablated < refined, || format!("{line}: ablation is not worse"))?;
    ensure(REFERENCE_ABLATED_PSNR.is_nan() || (ablated - REFERENCE_ABLATED_PSNR).abs() <= 1.0, || format!("{line}: ablated run drifted from the reference {REFERENCE_ABLATED_PSNR:.2}"))?;
    Ok(line)
}

fn short_config(root: &Path) -> PathBuf {
    let mut cfg = benchmark_config();
    cfg.schedule.stage1.iterations = 24;
    cfg.schedule.stage2.iterations = 12;
    cfg.schedule.rays_per_iteration = 64;
    let path = root.join("short.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

fn small_scene(root: &Path) -> Result<PathBuf, String> {
    let data = root.join("small");
    run_cli(&["synth", "--out", p(&data), "--seed", "3", "--frames", "5", "--size", "32"])?;
    Ok(data)
}

fn criterion_9(root: &Path) -> Outcome {
    let data = small_scene(root)?;
    let cfg = short_config(root);
    let run = root.join("transfer_src");
    run_cli(&["fit", "--data", p(&data), "--config", p(&cfg), "--out", p(&run)])?;
    let ckpt = run.join("avatar.ckpt");
    let out = root.join("self_transfer.ckpt");
    run_cli(&["transfer", "--body", p(&ckpt), "--clothing", p(&ckpt), "--out", p(&out)])?;
    let a = AvatarState::load(&ckpt).map_err(|e| e.to_string())?;
    let b = AvatarState::load(&out).map_err(|e| e.to_string())?;
    let c = transfer_clothing(&a, &a).map_err(|e| e.to_string())?;
    let render = benchmark_config().render;
    let mut frames = Vec::new();
    for state in [&a, &b, &c] {
        let scene = AvatarScene::for_frame(state, 1).map_err(|e| e.to_string())?;
        frames.push(scene.render(&state.frames[1].camera, 32, 32, &render, 99).map_err(|e| e.to_string())?);
    }
    let bits = |img: &Image| img.pixels.iter().flat_map(|p| p.iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect::<Vec<u64>>();
    ensure(bits(&frames[0].image) == bits(&frames[1].image) && bits(&frames[0].image) == bits(&frames[2].image), || "self-transfer render differs".into())?;
    ensure(frames[0].mask == frames[1].mask, || "self-transfer clothing mask differs".into())?;
    Ok("self-transfer renders bit-identical (CLI and library)".into())
}

fn criterion_10(root: &Path) -> Outcome {
    let data = root.join("small");
    let cfg = short_config(root);
    let mut bytes = Vec::new();
    for threads in ["1", "3"] {
        let run = root.join(format!("threads_{threads}"));
        run_cli(&["--threads", threads, "fit", "--data", p(&data), "--config", p(&cfg), "--seed", "17", "--out", p(&run)])?;
        bytes.push(std::fs::read(run.join("avatar.ckpt")).map_err(|e| e.to_string())?);
    }
    ensure(bytes[0] == bytes[1], || "checkpoints differ between 1 and 3 threads".into())?;
    Ok(format!("1-thread and 3-thread checkpoints byte-identical ({} bytes)", bytes[0].len()))
}

fn main() {
    // `cargo test --test acceptance -- 4 9` runs only the listed criteria
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: u32| only.is_empty() || only.contains(&id);
    let root = work_dir();
    let quick: Vec<(u32, &str, Box<dyn Fn() -> Outcome>)> = vec![
        (1, "compositing partition of unity", Box::new(criterion_1)),
        (2, "transparent clothing matches raster", Box::new(criterion_2)),
        (3, "canonicalization identity", Box::new(criterion_3)),
        (4, "gradient suite", Box::new(criterion_4)),
        (5, "intersection oracle", Box::new(criterion_5)),
        (6, "loss fixed points", Box::new(criterion_6)),
    ];
    let mut failed = 0;
    let mut report = |id: u32, name: &str, start: Instant, outcome: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {id:2} PASS  {name}: {msg} [{secs:.1}s]"),
            Err(msg) => {
                failed += 1;
                println!("criterion {id:2} FAIL  {name}: {msg} [{secs:.1}s]");
            }
        }
    };
    for (id, name, f) in quick.into_iter().filter(|c| wanted(c.0)) {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| f())).unwrap_or_else(|_| Err("panicked".into()));
        report(id, name, start, outcome);
    }
    if wanted(7) || wanted(8) {
        let start = Instant::now();
        let b = benchmark(&root);
        report(7, "synthetic end-to-end", start, criterion_7(&b));
        report(8, "pose-refinement ablation", start, criterion_8(&b));
    }
    if wanted(9) || wanted(10) {
        let start = Instant::now();
        report(9, "self-transfer idempotence", start, criterion_9(&root));
        let start = Instant::now();
        report(10, "thread-count reproducibility", start, criterion_10(&root));
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
