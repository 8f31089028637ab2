//! Diffusion and advection trajectories, training pairs, and the on-disk
//! dataset format.

use prelowd::datagen::{generate, pairs, IcSpec, PdeFamily, PdeSpec, Split};
use prelowd::io::{load_dataset, save_dataset};

fn main() -> prelowd::Result<()> {
    let heat = PdeSpec::new(PdeFamily::Diffusion, 0.004, 1, 128);
    let d = generate(&heat, &IcSpec::default(), 4, 42, Split::Train)?;
    println!("diffusion dataset {:?}, {} training pairs", d.shape(), pairs(&d).len());
    for k in [0, 10, 20] {
        let s = d.snapshot(0, k);
        let mean = s.data().iter().sum::<f64>() / s.grid_len() as f64;
        println!("  t={:.2}: |u| = {:.4}, mean = {mean:+.6}", 0.05 * k as f64, s.norm());
    }

    let wave = PdeSpec::new(PdeFamily::Advection, 0.4, 2, 32);
    let a = generate(&wave, &IcSpec::default(), 2, 42, Split::Valid)?;
    println!("advection dataset {:?}, |u0| = {:.4}, |u20| = {:.4}", a.shape(), a.snapshot(0, 0).norm(), a.snapshot(0, 20).norm());

    let (picked, indices) = d.select(2, 7)?;
    println!("subset of {} trajectories: {indices:?}", picked.n_samples());

    let dir = std::env::temp_dir().join("prelowd-generate-example");
    let path = dir.join("heat.bin");
    save_dataset(&path, &d.cast::<f32>())?;
    let back = load_dataset::<f32>(&path)?;
    println!("saved and reloaded {} ({:?})", path.display(), back.shape());
    Ok(())
}
