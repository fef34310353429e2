//! Image quality metrics on a pair of procedurally generated images.

use hybrid_avatar::math::Vec3;
use hybrid_avatar::render::Image;
use hybrid_avatar::workbench::{psnr, ssim};

fn main() -> hybrid_avatar::Result<()> {
    let n = 64;
    let pixels: Vec<Vec3> = (0..n * n).map(|p| {
        let (x, y) = ((p % n) as f64 / n as f64, (p / n) as f64 / n as f64);
        Vec3::new(x, y, 0.5 + 0.4 * (8.0 * x).sin() * (6.0 * y).cos())
    }).collect();
    let clean = Image::from_pixels(n, n, pixels.clone())?;
    let shifted = Image::from_pixels(n, n, pixels.iter().map(|p| p.map(|c| (c + 0.05).min(1.0))).collect())?;
    let blocky = Image::from_pixels(n, n, (0..n * n).map(|p| pixels[(p / n / 4 * 4) * n + (p % n) / 4 * 4]).collect())?;

    match psnr(&clean, &clean)? {
        None => println!("identical: PSNR infinite, SSIM {:.4}", ssim(&clean, &clean)?),
        Some(v) => println!("identical: PSNR {v}"),
    }
    for (name, img) in [("brightened", &shifted), ("4x4 blocks", &blocky)] {
        println!("{name:>10}: PSNR {:.2} dB  SSIM {:.4}", psnr(&clean, img)?.unwrap(), ssim(&clean, img)?);
    }
    Ok(())
}
