use std::collections::BTreeMap;

use crate::error::{usage, Result};
use crate::model::{FfnoParams, ParamPath};
use crate::scalar::Scalar;

use super::{GradStore, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    /// first and second moments per path, shaped like the parameter slices
    pub moments: BTreeMap<ParamPath, (Vec<Vec<T>>, Vec<Vec<T>>)>,
    pub step: u64,
    pub lr: f64,
    pub best_loss: f64,
    pub since_improvement: usize,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self { moments: BTreeMap::new(), step: 0, lr: cfg.lr, best_loss: f64::INFINITY, since_improvement: 0 }
    }
}

/// One AdamW update of every path present in `grads`; all other parameters
/// are left untouched. Weight decay is decoupled and skips biases.
pub fn adamw_step<T: Scalar>(
    params: &mut FfnoParams<T>,
    grads: &GradStore<T>,
    state: &mut OptimizerState<T>,
    cfg: &TrainConfig,
) -> Result<()> {
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    let lr = state.lr;
    let (b1, b2) = (T::from_f64_lossy(cfg.beta1), T::from_f64_lossy(cfg.beta2));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    let eps = T::from_f64_lossy(cfg.eps);
    let step_size = T::from_f64_lossy(lr / bias1);
    let inv_sqrt_bias2 = T::from_f64_lossy(1.0 / bias2.sqrt());

    for (path, g) in grads.iter() {
        let decay = if path.is_bias() { T::one() } else { T::from_f64_lossy(1.0 - lr * cfg.weight_decay) };
        let slices = params
            .slices_mut(path)
            .ok_or_else(|| usage(format!("gradient for unknown parameter {path}")))?;
        if slices.len() != g.len() || slices.iter().zip(g).any(|(p, g)| p.len() != g.len()) {
            return Err(usage(format!("gradient of {path} does not match the parameter shape")));
        }
        let (m, v) = state.moments.entry(*path).or_insert_with(|| {
            let zeros: Vec<Vec<T>> = g.iter().map(|s| vec![T::zero(); s.len()]).collect();
            (zeros.clone(), zeros)
        });
        for (((p, g), m), v) in slices.into_iter().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                let denom = v[i].sqrt() * inv_sqrt_bias2 + eps;
                p[i] = p[i] * decay - step_size * m[i] / denom;
            }
        }
    }
    Ok(())
}

/// Reduce-on-plateau: a strict improvement resets the counter; once the
/// counter reaches the patience the rate is multiplied by the factor
/// (floored at `min_lr`) and the counter restarts.
pub fn plateau_step<T>(state: &mut OptimizerState<T>, current_loss: f64, cfg: &TrainConfig) {
    if current_loss < state.best_loss {
        state.best_loss = current_loss;
        state.since_improvement = 0;
        return;
    }
    state.since_improvement += 1;
    if state.since_improvement >= cfg.plateau_patience {
        state.lr = (state.lr * cfg.plateau_factor).max(cfg.min_lr);
        state.since_improvement = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, AffinePart, FfnoConfig};

    fn setup() -> (FfnoParams<f64>, TrainConfig) {
        let cfg = FfnoConfig { dims: 1, layers: 2, width: 2, modes: 2, ff_expansion: 1, activation: Default::default() };
        (init_params(&cfg, 0).unwrap(), TrainConfig { weight_decay: 0.0, ..TrainConfig::default() })
    }

    #[test]
    fn first_adam_step_closed_form() {
        let (mut params, cfg) = setup();
        let path = ParamPath::ProjOut(AffinePart::Bias);
        params.proj_out.bias[0] = 0.0;
        let mut grads = GradStore::new();
        grads.insert(path, vec![vec![1.0]]);
        let mut state = OptimizerState::new(&cfg);
        adamw_step(&mut params, &grads, &mut state, &cfg).unwrap();
        let want = -1e-3 / (1.0 + 1e-8);
        assert!((params.proj_out.bias[0] - want).abs() < 1e-15);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradient_no_decay_is_a_no_op() {
        let (mut params, cfg) = setup();
        let before = params.clone();
        let mut grads = GradStore::new();
        for path in params.paths() {
            let zeros = params.slices(&path).unwrap().iter().map(|s| vec![0.0; s.len()]).collect();
            grads.insert(path, zeros);
        }
        let mut state = OptimizerState::new(&cfg);
        adamw_step(&mut params, &grads, &mut state, &cfg).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn paths_without_gradients_are_untouched() {
        let (mut params, cfg) = setup();
        let cfg = TrainConfig { weight_decay: 0.1, ..cfg };
        let before = params.clone();
        let mut grads = GradStore::new();
        grads.insert(ParamPath::ProjIn(AffinePart::Weight), vec![vec![5.0, -2.0]]);
        let mut state = OptimizerState::new(&cfg);
        adamw_step(&mut params, &grads, &mut state, &cfg).unwrap();
        let changed: Vec<_> = params.paths().into_iter().filter(|p| params.slices(p) != before.slices(p)).collect();
        assert_eq!(changed, vec![ParamPath::ProjIn(AffinePart::Weight)]);
    }

    #[test]
    fn weight_decay_skips_biases() {
        let (mut params, cfg) = setup();
        let cfg = TrainConfig { weight_decay: 0.5, ..cfg };
        params.proj_in.bias = vec![1.0, 1.0];
        params.proj_in.weight = vec![1.0, 1.0];
        let mut grads = GradStore::new();
        grads.insert(ParamPath::ProjIn(AffinePart::Weight), vec![vec![0.0, 0.0]]);
        grads.insert(ParamPath::ProjIn(AffinePart::Bias), vec![vec![0.0, 0.0]]);
        let mut state = OptimizerState::new(&cfg);
        adamw_step(&mut params, &grads, &mut state, &cfg).unwrap();
        assert_eq!(params.proj_in.bias, vec![1.0, 1.0]);
        assert!((params.proj_in.weight[0] - (1.0 - 1e-3 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn mismatched_gradient_shape_is_rejected() {
        let (mut params, cfg) = setup();
        let mut grads = GradStore::new();
        grads.insert(ParamPath::ProjIn(AffinePart::Weight), vec![vec![1.0]]);
        let mut state = OptimizerState::new(&cfg);
        assert!(adamw_step(&mut params, &grads, &mut state, &cfg).is_err());
    }

    #[test]
    fn plateau_schedule_examples() {
        let cfg = TrainConfig::default();
        let mut s = OptimizerState::<f32>::new(&cfg);
        for _ in 0..101 {
            plateau_step(&mut s, 1.0, &cfg);
        }
        assert!((s.lr - 2e-4).abs() < 1e-15);

        let mut s = OptimizerState::<f32>::new(&cfg);
        for _ in 0..202 {
            plateau_step(&mut s, 1.0, &cfg);
        }
        assert!((s.lr - 4e-5).abs() < 1e-15);

        let mut s = OptimizerState::<f32>::new(&cfg);
        for i in 0..1000 {
            plateau_step(&mut s, 1.0 - i as f64 * 1e-4, &cfg);
        }
        assert_eq!(s.lr, 1e-3);
    }

    #[test]
    fn plateau_never_drops_below_min_lr() {
        let cfg = TrainConfig::default();
        let mut s = OptimizerState::<f32>::new(&cfg);
        let mut last = s.lr;
        for _ in 0..5000 {
            plateau_step(&mut s, 1.0, &cfg);
            assert!(s.lr <= last && s.lr >= cfg.min_lr);
            last = s.lr;
        }
        assert_eq!(s.lr, cfg.min_lr);
    }
}
