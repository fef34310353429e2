//! Generates the synthetic subject (toy body in analytic clothing) and writes it to disk.
//!
//! cargo run --release --example synthetic_scene -- out_dir [frames] [size]

use std::path::PathBuf;

use hybrid_avatar::render::RenderConfig;
use hybrid_avatar::workbench::{generate_synthetic, SynthSpec};

fn main() -> hybrid_avatar::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synthetic".into()));
    let frames = args.next().and_then(|a| a.parse().ok()).unwrap_or(10);
    let size = args.next().and_then(|a| a.parse().ok()).unwrap_or(48);
    let spec = SynthSpec { frames, size, render: RenderConfig { n_coarse: 64, n_fine: 32, ..RenderConfig::default() }, ..SynthSpec::default() };
    let scene = generate_synthetic(&spec, 0)?;
    scene.save(&out)?;
    for (f, o) in scene.frames.iter().zip(&scene.observations) {
        println!(
            "frame {:2} {:5}: clothing {:4.1}% body {:4.1}% of pixels",
            f.index,
            if f.test { "test" } else { "train" },
            100.0 * o.clothing.mean(),
            100.0 * o.body.mean()
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
