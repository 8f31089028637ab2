//! Relative-L2 objective, exact gradients, AdamW with reduce-on-plateau, and
//! the training loop.

mod backprop;
mod optim;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::model::{forward_taped, FfnoParams, Mask, ParamPath};
use crate::scalar::Scalar;
use crate::spectral::Field;

pub use optim::{adamw_step, plateau_step, OptimizerState};

/// Floor on `||pred - target||` inside the backward pass.
pub const RESIDUAL_NORM_FLOOR: f64 = 1e-12;

/// Samples per sequential accumulation chunk; fixes the reduction order
/// independently of the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair<T> {
    pub input: Field<T>,
    pub target: Field<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    /// moving-average window of the loss fed to the plateau monitor
    pub plateau_window: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub min_lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            lr: 1e-3,
            plateau_factor: 0.2,
            plateau_patience: 100,
            plateau_window: 20,
            batch_size: 32,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            min_lr: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = [("lr", self.lr), ("beta1", self.beta1), ("beta2", self.beta2), ("eps", self.eps), ("min_lr", self.min_lr)];
        if let Some((name, _)) = rates.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
            return Err(usage(format!("{name} must be positive")));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(usage("plateau_factor must lie in (0, 1)"));
        }
        if self.batch_size == 0 || self.plateau_window == 0 {
            return Err(usage("batch_size and plateau_window must be at least 1"));
        }
        if self.weight_decay < 0.0 {
            return Err(usage("weight_decay must be non-negative"));
        }
        Ok(())
    }
}

/// `||pred - target|| / ||target||` over all entries.
pub fn rl2<T: Scalar>(pred: &Field<T>, target: &Field<T>) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape { expected: target.shape().to_vec(), actual: pred.shape().to_vec() });
    }
    let (mut err, mut norm) = (0.0f64, 0.0f64);
    for (p, t) in pred.data().iter().zip(target.data()) {
        let (p, t) = (p.as_f64(), t.as_f64());
        err += (p - t) * (p - t);
        norm += t * t;
    }
    if norm == 0.0 {
        return Err(Error::Metric("relative L2 against a zero target".into()));
    }
    Ok(err.sqrt() / norm.sqrt())
}

/// Mean relative L2 of the model over a batch of pairs.
pub fn batch_loss<T: Scalar>(params: &FfnoParams<T>, batch: &[&TrainingPair<T>]) -> Result<f64> {
    if batch.is_empty() {
        return Err(usage("empty batch"));
    }
    let mut total = 0.0;
    for pair in batch {
        let (pred, _) = forward_taped(params, &pair.input)?;
        total += rl2(&pred, &pair.target)?;
    }
    Ok(total / batch.len() as f64)
}

/// Gradients of the masked parameters, keyed by path. Fourier weights hold
/// `[re, im]`, every other tensor a single slice.
#[derive(Debug, Clone, PartialEq)]
pub struct GradStore<T> {
    grads: BTreeMap<ParamPath, Vec<Vec<T>>>,
}

impl<T: Scalar> GradStore<T> {
    pub fn new() -> Self {
        Self { grads: BTreeMap::new() }
    }

    /// Inserts a gradient; shape agreement with the parameter is checked in [`adamw_step`].
    pub fn insert(&mut self, path: ParamPath, slices: Vec<Vec<T>>) {
        self.grads.insert(path, slices);
    }

    pub fn get(&self, path: &ParamPath) -> Option<&[Vec<T>]> {
        self.grads.get(path).map(|v| v.as_slice())
    }

    pub fn paths(&self) -> impl Iterator<Item = &ParamPath> {
        self.grads.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamPath, &Vec<Vec<T>>)> {
        self.grads.iter()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    fn from_full(full: &FfnoParams<T>, mask: &Mask) -> Result<Self> {
        let mut grads = BTreeMap::new();
        for path in mask {
            let slices = full
                .slices(path)
                .ok_or_else(|| usage(format!("mask path {path} is not a parameter of this model")))?;
            if slices.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFinite(format!("gradient of {path}")));
            }
            grads.insert(*path, slices.into_iter().map(|s| s.to_vec()).collect());
        }
        Ok(Self { grads })
    }
}

impl<T: Scalar> Default for GradStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn add_into<T: Scalar>(acc: &mut FfnoParams<T>, other: &FfnoParams<T>) {
    for path in acc.paths() {
        let src = other.slices(&path).unwrap();
        for (dst, src) in acc.slices_mut(&path).unwrap().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = *d + *s;
            }
        }
    }
}

/// Loss and full-model gradient over a chunk, accumulated in order.
fn chunk_gradient<T: Scalar>(
    params: &FfnoParams<T>,
    chunk: &[&TrainingPair<T>],
    inv_batch: f64,
) -> Result<(f64, FfnoParams<T>)> {
    let mut grad = FfnoParams::zeros(params.config)?;
    let mut loss = 0.0;
    for pair in chunk {
        let (pred, tape) = forward_taped(params, &pair.input)?;
        if pred.shape() != pair.target.shape() {
            return Err(Error::Shape { expected: pair.target.shape().to_vec(), actual: pred.shape().to_vec() });
        }
        let mut err_sq = 0.0;
        let mut tgt_sq = 0.0;
        for (p, t) in pred.data().iter().zip(pair.target.data()) {
            let d = p.as_f64() - t.as_f64();
            err_sq += d * d;
            tgt_sq += t.as_f64() * t.as_f64();
        }
        if tgt_sq == 0.0 {
            return Err(Error::Metric("relative L2 against a zero target".into()));
        }
        let (err, tgt) = (err_sq.sqrt(), tgt_sq.sqrt());
        loss += err / tgt * inv_batch;
        let scale = inv_batch / (err.max(RESIDUAL_NORM_FLOOR) * tgt);
        let g_out: Vec<T> = pred
            .data()
            .iter()
            .zip(pair.target.data())
            .map(|(p, t)| T::from_f64_lossy((p.as_f64() - t.as_f64()) * scale))
            .collect();
        backprop::backward(params, &tape, &g_out, &mut grad);
    }
    Ok((loss, grad))
}

/// Batch loss together with the exact gradient of every masked parameter.
pub fn loss_and_grad<T: Scalar>(
    params: &FfnoParams<T>,
    batch: &[&TrainingPair<T>],
    mask: &Mask,
) -> Result<(f64, GradStore<T>)> {
    if mask.is_empty() {
        return Err(usage("trainable mask is empty"));
    }
    if batch.is_empty() {
        return Err(usage("empty batch"));
    }
    let inv_batch = 1.0 / batch.len() as f64;
    let partials: Vec<Result<(f64, FfnoParams<T>)>> =
        batch.par_chunks(GRAD_CHUNK).map(|chunk| chunk_gradient(params, chunk, inv_batch)).collect();
    let mut loss = 0.0;
    let mut total: Option<FfnoParams<T>> = None;
    for part in partials {
        let (l, g) = part?;
        loss += l;
        match total.as_mut() {
            None => total = Some(g),
            Some(acc) => add_into(acc, &g),
        }
    }
    let total = total.expect("batch is non-empty");
    Ok((loss, GradStore::from_full(&total, mask)?))
}

/// Exact reverse-mode gradient of [`batch_loss`] for the masked paths.
pub fn grad<T: Scalar>(params: &FfnoParams<T>, batch: &[&TrainingPair<T>], mask: &Mask) -> Result<GradStore<T>> {
    loss_and_grad(params, batch, mask).map(|(_, g)| g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub lr: f64,
    pub train_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: FfnoParams<T>,
    pub trace: Vec<TraceRow>,
    pub state: OptimizerState<T>,
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Indices of the pairs drawn (uniformly, with replacement) at `iteration`.
pub fn batch_indices(seed: u64, iteration: usize, n_pairs: usize, batch_size: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, iteration as u64));
    (0..batch_size.min(n_pairs)).map(|_| rng.random_range(0..n_pairs)).collect()
}

/// Runs `cfg.iterations` optimizer steps; the plateau monitor watches the
/// moving average of the training batch loss.
pub fn train<T: Scalar>(
    params: FfnoParams<T>,
    pairs: &[TrainingPair<T>],
    mask: &Mask,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(usage("training needs at least one input/output pair"));
    }
    let mut params = params;
    let mut state = OptimizerState::new(cfg);
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut window = std::collections::VecDeque::with_capacity(cfg.plateau_window);
    for iteration in 0..cfg.iterations {
        let batch: Vec<&TrainingPair<T>> =
            batch_indices(cfg.seed, iteration, pairs.len(), cfg.batch_size).into_iter().map(|i| &pairs[i]).collect();
        let (loss, grads) = loss_and_grad(&params, &batch, mask)?;
        let lr = state.lr;
        trace.push(TraceRow { iteration, lr, train_loss: loss });
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration, loss, trace });
        }
        adamw_step(&mut params, &grads, &mut state, cfg)?;
        if window.len() == cfg.plateau_window {
            window.pop_front();
        }
        window.push_back(loss);
        let smoothed = window.iter().sum::<f64>() / window.len() as f64;
        plateau_step(&mut state, smoothed, cfg);
    }
    Ok(TrainOutcome { params, trace, state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, Activation, FfnoConfig};
    use std::f64::consts::PI;

    #[test]
    fn rl2_examples() {
        let y = Field::<f64>::new(vec![1, 2], vec![3.0, 4.0]).unwrap();
        assert_eq!(rl2(&y, &y).unwrap(), 0.0);
        let zero = Field::<f64>::zeros(vec![1, 2]).unwrap();
        assert_eq!(rl2(&zero, &y).unwrap(), 1.0);
        let p = Field::<f64>::new(vec![1, 2], vec![3.0, 9.0]).unwrap();
        assert!((rl2(&p, &y).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(rl2(&y, &zero), Err(Error::Metric(_))));
        let other = Field::<f64>::zeros(vec![1, 3]).unwrap();
        assert!(matches!(rl2(&other, &y), Err(Error::Shape { .. })));
    }

    fn tiny() -> FfnoConfig {
        FfnoConfig { dims: 1, layers: 2, width: 4, modes: 3, ff_expansion: 2, activation: Activation::Relu }
    }

    fn pair(seed: u64) -> TrainingPair<f64> {
        let a = 0.3 + seed as f64 * 0.1;
        TrainingPair {
            input: Field::from_fn(vec![1, 16], |_, x| (2.0 * PI * x[0]).sin() + a * (4.0 * PI * x[0]).cos()).unwrap(),
            target: Field::from_fn(vec![1, 16], |_, x| 0.9 * (2.0 * PI * x[0]).sin() + a * 0.7 * (4.0 * PI * x[0]).cos()).unwrap(),
        }
    }

    #[test]
    fn batch_loss_is_a_mean() {
        let params = init_params::<f64>(&tiny(), 3).unwrap();
        let (p0, p1) = (pair(0), pair(1));
        let l0 = batch_loss(&params, &[&p0]).unwrap();
        let l1 = batch_loss(&params, &[&p1]).unwrap();
        assert!((batch_loss(&params, &[&p0, &p0, &p0]).unwrap() - l0).abs() < 1e-12);
        assert!((batch_loss(&params, &[&p0, &p1]).unwrap() - 0.5 * (l0 + l1)).abs() < 1e-7);
    }

    #[test]
    fn grad_keys_follow_mask() {
        let params = init_params::<f64>(&tiny(), 3).unwrap();
        let p0 = pair(0);
        let mask: Mask = ["proj.in.weight", "layer.1.fourier.x", "layer.0.ff.b2"].iter().map(|s| s.parse().unwrap()).collect();
        let g = grad(&params, &[&p0], &mask).unwrap();
        assert_eq!(g.paths().copied().collect::<Mask>(), mask);
        assert!(matches!(grad(&params, &[&p0], &Mask::new()), Err(Error::Usage(_))));
    }

    #[test]
    fn loss_and_grad_agree_with_batch_loss() {
        let params = init_params::<f64>(&tiny(), 5).unwrap();
        let pairs: Vec<_> = (0..6).map(pair).collect();
        let refs: Vec<_> = pairs.iter().collect();
        let (loss, _) = loss_and_grad(&params, &refs, &crate::model::full_mask(&tiny())).unwrap();
        assert!((loss - batch_loss(&params, &refs).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn batch_sampling_is_a_pure_function() {
        assert_eq!(batch_indices(4, 17, 100, 8), batch_indices(4, 17, 100, 8));
        assert_ne!(batch_indices(4, 17, 100, 8), batch_indices(4, 18, 100, 8));
        assert_eq!(batch_indices(4, 0, 3, 32).len(), 3);
        assert!(batch_indices(9, 2, 5, 5).iter().all(|&i| i < 5));
    }

    #[test]
    fn train_rejects_empty_data_and_bad_config() {
        let params = init_params::<f64>(&tiny(), 1).unwrap();
        let mask = crate::model::full_mask(&tiny());
        assert!(train(params.clone(), &[], &mask, &TrainConfig::default()).is_err());
        let bad = TrainConfig { plateau_factor: 1.5, ..TrainConfig::default() };
        assert!(train(params, &[pair(0)], &mask, &bad).is_err());
    }
}
