//! Building FFNO models, running them on 1D and 2D grids, and counting
//! parameters.

use std::f64::consts::PI;

use prelowd::model::{forward, init_params, param_count, FfnoConfig};
use prelowd::transfer::{trainable_mask, FinetuneConfig};
use prelowd::Field;

fn main() -> prelowd::Result<()> {
    let cfg = FfnoConfig { dims: 1, layers: 4, width: 16, modes: 6, ff_expansion: 2, activation: Default::default() };
    let params = init_params::<f64>(&cfg, 7)?;

    // the same weights evaluate any resolution with at least 2M points
    let wave = |x: &[f64]| (2.0 * PI * x[0]).sin() + 0.3 * (6.0 * PI * x[0]).cos();
    let coarse = forward(&params, &Field::from_fn(vec![1, 32], |_, x| wave(x))?)?;
    let fine = forward(&params, &Field::from_fn(vec![1, 64], |_, x| wave(x))?)?;
    let gap = (0..32).map(|j| (coarse.data()[j] - fine.data()[2 * j]).abs()).fold(0.0, f64::max);
    println!("res 32 vs 64 on shared points: max gap {gap:.2e}");

    let cfg2 = cfg.with_dims(2);
    let p2 = init_params::<f32>(&cfg2, 7)?;
    let out = forward(&p2, &Field::<f32>::zeros(vec![1, 24, 24])?)?;
    println!("2D output shape {:?}", out.shape());

    let reference = FfnoConfig::reference(2);
    let full = param_count(&reference, true, None);
    let dense = param_count(&reference, false, None);
    println!("H=128 M=16 2D: {} complex Fourier entries per layer (dense FNO: {})", full.fourier_complex_per_layer, dense.fourier_complex_per_layer);
    println!("feedforward reals per layer: {}", full.ff_real_per_layer);
    for tag in [FinetuneConfig::C2, FinetuneConfig::C8] {
        let mask = trainable_mask(tag, &reference)?;
        let c = param_count(&reference, true, Some(&mask));
        println!("{tag}: {} trainable Fourier, {} trainable total", c.trainable_fourier_complex, c.total_trainable);
    }
    Ok(())
}
