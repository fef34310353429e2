//! Dresses one avatar in another's clothing.
//!
//! cargo run --release --example clothing_transfer -- body.ckpt clothing.ckpt out.png

use hybrid_avatar::pipeline::{transfer_clothing, AvatarScene, AvatarState};
use hybrid_avatar::workbench::benchmark_config;

fn main() -> hybrid_avatar::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 3 {
        eprintln!("usage: clothing_transfer BODY.ckpt CLOTHING.ckpt OUT.png");
        std::process::exit(1);
    }
    let body = AvatarState::load(args[0].as_ref())?;
    let clothing = AvatarState::load(args[1].as_ref())?;
    let dressed = transfer_clothing(&body, &clothing)?;
    let render = benchmark_config().render;
    let frame = AvatarScene::for_frame(&dressed, 0)?.render(&dressed.frames[0].camera, 64, 64, &render, 0)?;
    frame.image.save(args[2].as_ref())?;
    let back = transfer_clothing(&dressed, &body)?;
    println!("transfer and back restores the body avatar: {}", back == body);
    Ok(())
}
