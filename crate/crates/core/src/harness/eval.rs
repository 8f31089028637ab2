use rayon::prelude::*;

use crate::datagen::TrajectoryDataset;
use crate::error::{usage, Result};
use crate::model::{forward, FfnoParams};
use crate::scalar::Scalar;
use crate::spectral::Field;
use crate::training::rl2;

/// Anything that maps a state to the predicted next state.
pub trait Predictor<T>: Sync {
    fn predict(&self, u: &Field<T>) -> Result<Field<T>>;
}

impl<T: Scalar> Predictor<T> for FfnoParams<T> {
    fn predict(&self, u: &Field<T>) -> Result<Field<T>> {
        forward(self, u)
    }
}

/// Adapts a closure, e.g. an exact solution operator.
pub struct FnPredictor<F>(pub F);

impl<T, F> Predictor<T> for FnPredictor<F>
where
    F: Fn(&Field<T>) -> Result<Field<T>> + Sync,
{
    fn predict(&self, u: &Field<T>) -> Result<Field<T>> {
        (self.0)(u)
    }
}

fn ordered_mean(values: Vec<Result<f64>>) -> Result<f64> {
    let n = values.len();
    let mut total = 0.0;
    for v in values {
        total += v?;
    }
    Ok(total / n as f64)
}

/// Mean rL2 of one-step predictions over every consecutive pair of every sample.
pub fn evaluate_next_step<T: Scalar>(model: &impl Predictor<T>, data: &TrajectoryDataset<T>) -> Result<f64> {
    if data.n_samples() == 0 || data.n_snapshots() < 2 {
        return Err(usage("evaluation needs at least one sample with two snapshots"));
    }
    let cells: Vec<(usize, usize)> =
        (0..data.n_samples()).flat_map(|s| (0..data.n_snapshots() - 1).map(move |t| (s, t))).collect();
    let scores = cells
        .par_iter()
        .map(|&(s, t)| rl2(&model.predict(&data.snapshot(s, t))?, &data.snapshot(s, t + 1)))
        .collect();
    ordered_mean(scores)
}

/// Autoregressive rollout from snapshot 0: each sample scores the mean rL2 of
/// its first `depth` predictions; the result is the mean over samples.
pub fn evaluate_rollout<T: Scalar>(model: &impl Predictor<T>, data: &TrajectoryDataset<T>, depth: usize) -> Result<f64> {
    if depth == 0 || depth >= data.n_snapshots() {
        return Err(usage(format!("rollout depth {depth} outside 1..={}", data.n_snapshots().saturating_sub(1))));
    }
    if data.n_samples() == 0 {
        return Err(usage("evaluation needs at least one sample"));
    }
    let scores = (0..data.n_samples())
        .into_par_iter()
        .map(|s| {
            let mut u = data.snapshot(s, 0);
            let mut total = 0.0;
            for k in 1..=depth {
                u = model.predict(&u)?;
                total += rl2(&u, &data.snapshot(s, k))?;
            }
            Ok(total / depth as f64)
        })
        .collect();
    ordered_mean(scores)
}
