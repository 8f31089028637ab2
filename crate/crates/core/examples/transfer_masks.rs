//! Lifting a 1D model to 2D and the trainable path sets of C0-C8.

use prelowd::model::{init_params, param_count, FfnoConfig};
use prelowd::transfer::{lift_1d_to_2d, trainable_mask, FinetuneConfig};
use prelowd::{forward, Field};

fn main() -> prelowd::Result<()> {
    let cfg1 = FfnoConfig { dims: 1, layers: 4, width: 8, modes: 4, ff_expansion: 2, activation: Default::default() };
    let cfg2 = cfg1.with_dims(2);
    let p1 = init_params::<f64>(&cfg1, 3)?;
    let p2 = lift_1d_to_2d(&p1, &cfg2)?;
    assert_eq!(p2.layers[0].fourier[0], p2.layers[0].fourier[1]);
    let out = forward(&p2, &Field::<f64>::from_fn(vec![1, 16, 16], |_, x| (6.0 * x[0]).sin() * (4.0 * x[1]).cos())?)?;
    println!("lifted model runs on {:?}", out.shape());

    for tag in FinetuneConfig::ALL {
        let mask = trainable_mask(tag, &cfg2)?;
        let layers: Vec<String> = (0..cfg2.layers)
            .map(|l| {
                let f = mask.iter().any(|p| p.is_fourier() && p.layer() == Some(l));
                let ff = mask.iter().any(|p| !p.is_fourier() && p.layer() == Some(l));
                format!("{}{}", if f { "F" } else { "-" }, if ff { "W" } else { "-" })
            })
            .collect();
        let count = param_count(&cfg2, true, Some(&mask)).total_trainable;
        println!("{tag}: layers [{}], {count} trainable", layers.join(" "));
    }
    Ok(())
}
