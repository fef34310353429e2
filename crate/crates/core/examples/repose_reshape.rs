//! Animates a fitted avatar: new poses, a turned view and a different body shape.
//!
//! cargo run --release --example repose_reshape -- avatar.ckpt out_dir
//!
//! Without a checkpoint a small avatar is fitted first.

use std::path::PathBuf;

use hybrid_avatar::pipeline::{repose, reshape, AvatarState};
use hybrid_avatar::render::RenderConfig;
use hybrid_avatar::workbench::{benchmark_config, fit_dataset, generate_synthetic, synth::scripted_pose, turn, Dataset, Stages, SynthSpec};

fn quick_avatar(dir: &std::path::Path) -> hybrid_avatar::Result<AvatarState> {
    let spec = SynthSpec { frames: 6, size: 32, render: RenderConfig { n_coarse: 48, n_fine: 24, ..RenderConfig::default() }, ..SynthSpec::default() };
    generate_synthetic(&spec, 2)?.save(dir)?;
    let mut cfg = benchmark_config();
    cfg.schedule.stage1.iterations = 300;
    cfg.schedule.stage2.iterations = 100;
    Ok(fit_dataset(&Dataset::load(dir)?, &cfg, Stages::Both, None, None)?.state)
}

fn main() -> hybrid_avatar::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = args.next().filter(|a| a != "-");
    let out = PathBuf::from(args.next().unwrap_or_else(|| "animate".into()));
    std::fs::create_dir_all(&out)?;
    let state = match ckpt {
        Some(p) => AvatarState::load(p.as_ref())?,
        None => quick_avatar(&out.join("data"))?,
    };
    let camera = state.frames[0].camera;
    let render = benchmark_config().render;

    for (i, phase) in [0usize, 3, 6, 9].into_iter().enumerate() {
        let theta = scripted_pose(&state.asset, phase, 12);
        repose(&state, &theta)?.render(&camera, 64, 64, &render, 0)?.image.save(&out.join(format!("pose_{i}.png")))?;
    }
    let theta = scripted_pose(&state.asset, 0, 12);
    let side = turn(&theta, 40f64.to_radians());
    repose(&state, &side)?.render(&camera, 64, 64, &render, 0)?.image.save(&out.join("turned.png"))?;

    for (name, scale) in [("thin", -1.5), ("broad", 1.5)] {
        let mut beta = state.beta.clone();
        beta[0] += scale;
        let frame = reshape(&state, &beta, &theta)?.render(&camera, 64, 64, &render, 0)?;
        frame.image.save(&out.join(format!("shape_{name}.png")))?;
        println!("{name}: clothing covers {:.1}% of the frame", 100.0 * frame.mask.mean());
    }
    println!("wrote renders to {}", out.display());
    Ok(())
}
