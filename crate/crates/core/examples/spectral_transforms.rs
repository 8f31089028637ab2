//! Real FFTs along one axis, mode truncation, and a check against the
//! brute-force DFT.

use std::f64::consts::PI;

use prelowd::spectral::{dft_oracle, irfft_axis, rfft_axis, truncate_modes};
use prelowd::Field;

fn main() -> prelowd::Result<()> {
    // 2 sin(2 pi x) + 0.5 cos(2 pi 5 x) on 16 points
    let u = Field::<f64>::from_fn(vec![1, 16], |_, x| 2.0 * (2.0 * PI * x[0]).sin() + 0.5 * (10.0 * PI * x[0]).cos())?;
    let spec = rfft_axis(&u, 0)?;
    for (k, c) in spec.coeffs().iter().enumerate() {
        if c.norm() > 1e-9 {
            println!("k={k}: {:.3}{:+.3}i", c.re, c.im);
        }
    }

    let oracle = dft_oracle(&u, 0)?;
    let worst = spec.coeffs().iter().zip(oracle.coeffs()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    println!("max deviation from the O(S^2) DFT: {worst:.2e}");

    let low = irfft_axis(&truncate_modes(&spec, 3)?)?;
    println!("after keeping 3 modes, u(1/4) = {:.4} (the k=5 term is gone)", low.data()[4]);

    // transforms act along the chosen axis only
    let v = Field::<f64>::from_fn(vec![1, 8, 8], |_, x| (2.0 * PI * x[1]).cos())?;
    let along_y = rfft_axis(&v, 1)?;
    println!("2D field, axis 1 spectrum shape {:?}", along_y.shape());
    Ok(())
}
