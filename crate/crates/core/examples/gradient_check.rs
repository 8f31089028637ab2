//! Reverse-mode gradients of the rL2 loss against central finite differences.

use std::f64::consts::PI;

use prelowd::model::{full_mask, init_params, FfnoConfig};
use prelowd::training::{batch_loss, grad, TrainingPair};
use prelowd::Field;

fn main() -> prelowd::Result<()> {
    let cfg = FfnoConfig { dims: 1, layers: 2, width: 4, modes: 3, ff_expansion: 2, activation: Default::default() };
    let params = init_params::<f64>(&cfg, 1)?;
    let pair = TrainingPair {
        input: Field::from_fn(vec![1, 16], |_, x| (2.0 * PI * x[0]).sin() + 0.4 * (4.0 * PI * x[0]).cos())?,
        target: Field::from_fn(vec![1, 16], |_, x| 0.8 * (2.0 * PI * x[0] + 0.3).sin())?,
    };
    let analytic = grad(&params, &[&pair], &full_mask(&cfg))?;

    let h = 1e-5;
    for path in params.paths() {
        let g = analytic.get(&path).expect("every path is masked");
        let mut worst: f64 = 0.0;
        for (part, slice) in g.iter().enumerate() {
            for (i, &a) in slice.iter().enumerate() {
                let mut plus = params.clone();
                plus.slices_mut(&path).unwrap()[part][i] += h;
                let mut minus = params.clone();
                minus.slices_mut(&path).unwrap()[part][i] -= h;
                let fd = (batch_loss(&plus, &[&pair])? - batch_loss(&minus, &[&pair])?) / (2.0 * h);
                worst = worst.max((fd - a).abs() / fd.abs().max(a.abs()).max(1e-3));
            }
        }
        println!("{path:<22} worst relative error {worst:.1e}");
    }
    Ok(())
}
