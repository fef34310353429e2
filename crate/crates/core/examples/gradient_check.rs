//! Compares the analytic gradient of one frame's objective with central differences along
//! random directions in each parameter group.

use hybrid_avatar::pipeline::{evaluate_frame, AvatarState, BodyContext, EvalOptions, FramePlan, Stage};
use hybrid_avatar::fields::FieldId;
use hybrid_avatar::render::RenderConfig;
use hybrid_avatar::workbench::{benchmark_config, generate_synthetic, SynthSpec};
use rand::{Rng, SeedableRng};

fn main() -> hybrid_avatar::Result<()> {
    let spec = SynthSpec { frames: 1, size: 24, render: RenderConfig { n_coarse: 32, n_fine: 16, ..RenderConfig::default() }, ..SynthSpec::default() };
    let scene = generate_synthetic(&spec, 3)?;
    let cfg = benchmark_config();
    let poses = scene.frames.iter().map(|f| f.init.clone()).collect();
    let mut state = AvatarState::initialize(scene.asset.clone(), &cfg.fields, Some(cfg.canonical(&scene.asset)), vec![0.0; scene.asset.n_shape], poses, 0)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for id in FieldId::ALL {
        state.fields.get_mut(id).params_mut().iter_mut().for_each(|p| *p += rng.gen_range(-0.05..0.05));
    }
    let ctx = BodyContext::new(&state.asset, &state.canonical)?;
    let opts = EvalOptions { stage: Stage::Two, weights: &cfg.weights, render: &cfg.render, deformation: true, perceptual: None, want_grad: true };
    let mut plan = FramePlan::new((0..24 * 24).step_by(7).collect(), 1);
    let obs = &scene.observations[0];
    let (_, g) = evaluate_frame(&ctx, &state.fields, &state.beta, &state.frames[0], obs, &mut plan, &opts)?;
    let g = g.expect("gradient requested");

    let h = 1e-6;
    for id in FieldId::ALL {
        let dir: Vec<f64> = (0..state.fields.get(id).n_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let analytic: f64 = g.fields.get(id).iter().zip(&dir).map(|(a, b)| a * b).sum();
        let mut at = |sign: f64| -> hybrid_avatar::Result<f64> {
            let mut s = state.clone();
            s.fields.get_mut(id).params_mut().iter_mut().zip(&dir).for_each(|(p, d)| *p += sign * h * d);
            Ok(evaluate_frame(&ctx, &s.fields, &s.beta, &s.frames[0], obs, &mut plan, &opts)?.0.total())
        };
        let numeric = (at(1.0)? - at(-1.0)?) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12);
        println!("{id:>12?}: analytic {analytic:+.6e}  numeric {numeric:+.6e}  relative error {rel:.1e}");
    }
    Ok(())
}
