//! Writes the built-in run configurations as TOML files.
//!
//! cargo run --release --example write_configs -- configs/

use std::path::PathBuf;

use hybrid_avatar::pipeline::RunConfig;
use hybrid_avatar::workbench::benchmark_config;

fn main() -> hybrid_avatar::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "configs".into()));
    std::fs::create_dir_all(&dir)?;
    for (name, cfg) in [("benchmark", benchmark_config()), ("full", RunConfig::default())] {
        let path = dir.join(format!("{name}.toml"));
        std::fs::write(&path, cfg.to_toml()?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
