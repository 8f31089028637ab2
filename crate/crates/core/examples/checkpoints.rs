//! Saving and loading checkpoints, and what happens to a damaged one.

use prelowd::io::{load_checkpoint, save_checkpoint, Checkpoint, Provenance};
use prelowd::model::{init_params, FfnoConfig};

fn main() -> prelowd::Result<()> {
    let cfg = FfnoConfig { dims: 1, layers: 2, width: 8, modes: 4, ff_expansion: 2, activation: Default::default() };
    let ckpt = Checkpoint {
        params: init_params::<f32>(&cfg, 5)?,
        provenance: Provenance { seed: 5, ..Provenance::default() },
        training: None,
    };
    let dir = std::env::temp_dir().join("prelowd-checkpoint-example");
    let path = dir.join("model");
    let id = save_checkpoint(&path, &ckpt)?;
    println!("saved {}.json/.bin, content id {}", path.display(), &id[..12]);

    let back = load_checkpoint::<f32>(&path, Some(&cfg))?;
    println!("reload identical: {}", back == ckpt);

    let wrong = FfnoConfig { modes: 3, ..cfg };
    println!("requesting another config: {}", load_checkpoint::<f32>(&path, Some(&wrong)).unwrap_err());

    let blob = path.with_extension("bin");
    let bytes = std::fs::read(&blob).map_err(|e| prelowd::Error::Io { path: blob.clone(), source: e })?;
    std::fs::write(&blob, &bytes[..bytes.len() / 2]).map_err(|e| prelowd::Error::Io { path: blob.clone(), source: e })?;
    println!("truncated blob: {}", load_checkpoint::<f32>(&path, None).unwrap_err());
    Ok(())
}
