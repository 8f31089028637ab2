//! Lifting a trained 1D model into 2D and the fine-tuning masks C0-C8.
//!
//! | component            | C1 | C2 | C3 | C4 | C5 | C6 | C7 | C8 |
//! |----------------------|----|----|----|----|----|----|----|----|
//! | Fourier, first layer | x  | x  |    |    | x  | x  | x  |    |
//! | FF, first layer      | x  |    | x  |    |    | x  |    |    |
//! | Fourier, middle      | x  | x  |    |    |    |    |    |    |
//! | FF, middle           | x  |    | x  |    |    |    |    |    |
//! | Fourier, last layer  | x  | x  |    |    |    |    |    | x  |
//! | FF, last layer       | x  |    | x  | x  |    |    | x  | x  |
//!
//! Projectors are trainable everywhere. C0 is a fresh random model with
//! every parameter trainable.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::model::{all_paths, full_mask, init_params, FfnoConfig, FfnoParams, Mask, ParamPath};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FinetuneConfig {
    C0,
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C8,
}

impl FinetuneConfig {
    pub const ALL: [FinetuneConfig; 9] = [
        FinetuneConfig::C0,
        FinetuneConfig::C1,
        FinetuneConfig::C2,
        FinetuneConfig::C3,
        FinetuneConfig::C4,
        FinetuneConfig::C5,
        FinetuneConfig::C6,
        FinetuneConfig::C7,
        FinetuneConfig::C8,
    ];

    pub fn uses_pretrained(self) -> bool {
        self != FinetuneConfig::C0
    }

    /// (Fourier, feedforward) trainability for the first, middle and last layers.
    fn table(self) -> [(bool, bool); 3] {
        use FinetuneConfig::*;
        match self {
            C0 | C1 => [(true, true); 3],
            C2 => [(true, false); 3],
            C3 => [(false, true); 3],
            C4 => [(false, false), (false, false), (false, true)],
            C5 => [(true, false), (false, false), (false, false)],
            C6 => [(true, true), (false, false), (false, false)],
            C7 => [(true, false), (false, false), (false, true)],
            C8 => [(false, false), (false, false), (true, true)],
        }
    }
}

impl fmt::Display for FinetuneConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", *self as usize)
    }
}

impl FromStr for FinetuneConfig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FinetuneConfig::ALL
            .iter()
            .copied()
            .find(|t| t.to_string() == s)
            .ok_or_else(|| usage(format!("unknown fine-tuning config {s:?} (expected C0..C8)")))
    }
}

/// Trainable paths of `tag` for a model of `cfg.layers` layers. Layer 0 is
/// "first", `layers - 1` is "last", everything between is "middle".
pub fn trainable_mask(tag: FinetuneConfig, cfg: &FfnoConfig) -> Result<Mask> {
    if cfg.layers < 2 {
        return Err(usage("fine-tuning masks need at least 2 layers"));
    }
    let table = tag.table();
    let last = cfg.layers - 1;
    let row = |layer: usize| {
        if layer == 0 {
            table[0]
        } else if layer == last {
            table[2]
        } else {
            table[1]
        }
    };
    Ok(all_paths(cfg)
        .into_iter()
        .filter(|path| match path {
            ParamPath::ProjIn(_) | ParamPath::ProjOut(_) => true,
            ParamPath::Fourier { layer, .. } => row(*layer).0,
            ParamPath::Ff { layer, .. } => row(*layer).1,
        })
        .collect())
}

/// Copies a 1D model into a 2D one: each layer's single-axis Fourier weights
/// become independent x and y copies, everything else is copied verbatim.
pub fn lift_1d_to_2d<T: Scalar>(p1: &FfnoParams<T>, cfg2: &FfnoConfig) -> Result<FfnoParams<T>> {
    let c1 = &p1.config;
    if c1.dims != 1 {
        return Err(usage(format!("source model must be 1D, got {}D", c1.dims)));
    }
    if cfg2.dims != 2 {
        return Err(usage(format!("target config must be 2D, got {}D", cfg2.dims)));
    }
    let checks = [
        ("layers", c1.layers, cfg2.layers),
        ("width", c1.width, cfg2.width),
        ("modes", c1.modes, cfg2.modes),
        ("ff_expansion", c1.ff_expansion, cfg2.ff_expansion),
    ];
    for (name, a, b) in checks {
        if a != b {
            return Err(usage(format!("cannot lift: {name} differs (1D model {a}, 2D config {b})")));
        }
    }
    if c1.activation != cfg2.activation {
        return Err(usage(format!(
            "cannot lift: activation differs (1D model {:?}, 2D config {:?})",
            c1.activation, cfg2.activation
        )));
    }
    let mut p2 = FfnoParams::zeros(*cfg2)?;
    p2.proj_in = p1.proj_in.clone();
    p2.proj_out = p1.proj_out.clone();
    for (dst, src) in p2.layers.iter_mut().zip(&p1.layers) {
        dst.ff1 = src.ff1.clone();
        dst.ff2 = src.ff2.clone();
        dst.fourier = vec![src.fourier[0].clone(), src.fourier[0].clone()];
    }
    Ok(p2)
}

/// Downstream starting point for one fine-tuning configuration: a fresh
/// model for C0, otherwise the lifted pretrained model with its mask.
pub fn prepare_downstream<T: Scalar>(
    tag: FinetuneConfig,
    pretrained_1d: Option<&FfnoParams<T>>,
    cfg2: &FfnoConfig,
    seed: u64,
) -> Result<(FfnoParams<T>, Mask)> {
    match (tag, pretrained_1d) {
        (FinetuneConfig::C0, _) => Ok((init_params(cfg2, seed)?, full_mask(cfg2))),
        (_, None) => Err(usage(format!("{tag} requires a pretrained 1D model"))),
        (_, Some(p1)) => Ok((lift_1d_to_2d(p1, cfg2)?, trainable_mask(tag, cfg2)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, FfPart};
    use crate::spectral::Field;

    fn cfg(dims: usize) -> FfnoConfig {
        FfnoConfig { dims, layers: 4, width: 4, modes: 3, ff_expansion: 2, activation: Default::default() }
    }

    fn names(mask: &Mask) -> Vec<String> {
        mask.iter().map(|p| p.to_string()).collect()
    }

    #[test]
    fn tags_round_trip() {
        for t in FinetuneConfig::ALL {
            assert_eq!(t.to_string().parse::<FinetuneConfig>().unwrap(), t);
        }
        assert!(matches!("C9".parse::<FinetuneConfig>(), Err(Error::Usage(_))));
    }

    #[test]
    fn masks_always_include_projectors_and_partition_paths() {
        for t in FinetuneConfig::ALL {
            let c = cfg(2);
            let mask = trainable_mask(t, &c).unwrap();
            assert!(all_paths(&c).iter().filter(|p| p.is_projector()).all(|p| mask.contains(p)));
            let all: Mask = all_paths(&c).into_iter().collect();
            let frozen: Mask = all.difference(&mask).copied().collect();
            assert!(mask.is_disjoint(&frozen));
            assert_eq!(&mask | &frozen, all);
        }
    }

    #[test]
    fn two_layer_models_have_no_middle() {
        let c = FfnoConfig { layers: 2, ..cfg(2) };
        let mask = trainable_mask(FinetuneConfig::C8, &c).unwrap();
        assert!(mask.contains(&ParamPath::Fourier { layer: 1, axis: 1 }));
        assert!(!mask.contains(&ParamPath::Fourier { layer: 0, axis: 0 }));
        assert!(trainable_mask(FinetuneConfig::C1, &FfnoConfig { layers: 1, ..c }).is_err());
    }

    #[test]
    fn c5_mask_is_first_fourier_plus_projectors() {
        let mask = trainable_mask(FinetuneConfig::C5, &cfg(2)).unwrap();
        assert_eq!(
            names(&mask),
            ["proj.in.weight", "proj.in.bias", "layer.0.fourier.x", "layer.0.fourier.y", "proj.out.weight", "proj.out.bias"]
        );
    }

    #[test]
    fn lift_copies_and_decouples_axes() {
        let p1 = init_params::<f64>(&cfg(1), 11).unwrap();
        let mut p2 = lift_1d_to_2d(&p1, &cfg(2)).unwrap();
        for (l2, l1) in p2.layers.iter().zip(&p1.layers) {
            assert_eq!(l2.fourier[0], l1.fourier[0]);
            assert_eq!(l2.fourier[1], l1.fourier[0]);
            assert_eq!(l2.ff1, l1.ff1);
            assert_eq!(l2.ff2, l1.ff2);
        }
        assert_eq!(p2.proj_in, p1.proj_in);
        p2.layers[0].fourier[0].re[0] += 1.0;
        assert_eq!(p2.layers[0].fourier[1], p1.layers[0].fourier[0]);
        let u = Field::<f64>::from_fn(vec![1, 8, 8], |_, x| (6.0 * x[0]).sin() * x[1]).unwrap();
        let out = forward(&p2, &u).unwrap();
        assert_eq!(out.shape(), &[1, 8, 8]);
        assert!(out.is_finite());
    }

    #[test]
    fn lift_rejects_mismatches() {
        let p1 = init_params::<f64>(&cfg(1), 1).unwrap();
        let err = lift_1d_to_2d(&p1, &FfnoConfig { modes: 4, ..cfg(2) }).unwrap_err();
        assert!(err.to_string().contains("modes"));
        let err = lift_1d_to_2d(&p1, &FfnoConfig { width: 8, ..cfg(2) }).unwrap_err();
        assert!(err.to_string().contains("width"));
        assert!(lift_1d_to_2d(&p1, &cfg(1)).is_err());
        let p2 = init_params::<f64>(&cfg(2), 1).unwrap();
        assert!(lift_1d_to_2d(&p2, &cfg(2)).is_err());
    }

    #[test]
    fn prepare_downstream_contracts() {
        let c2 = cfg(2);
        let (p, mask) = prepare_downstream::<f64>(FinetuneConfig::C0, None, &c2, 5).unwrap();
        assert_eq!(p, init_params(&c2, 5).unwrap());
        assert_eq!(mask, full_mask(&c2));
        assert!(prepare_downstream::<f64>(FinetuneConfig::C3, None, &c2, 5).is_err());
        let p1 = init_params::<f64>(&cfg(1), 2).unwrap();
        let (p, mask) = prepare_downstream(FinetuneConfig::C4, Some(&p1), &c2, 5).unwrap();
        assert_eq!(p, lift_1d_to_2d(&p1, &c2).unwrap());
        assert!(mask.contains(&ParamPath::Ff { layer: 3, part: FfPart::W2 }));
        assert_eq!(mask.len(), 8);
    }
}
