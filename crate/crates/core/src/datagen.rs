//! Periodic diffusion and advection trajectories from random sinusoidal
//! initial conditions.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::scalar::Scalar;
use crate::spectral::Field;
use crate::training::TrainingPair;

/// Initial condition `u0(x) = sum_i A_i sin(2 pi n_i . x + phi_i)` with
/// `A ~ U[-amplitude, amplitude]`, each wavenumber component
/// `~ U{min_wavenumber..=max_wavenumber}` and `phi ~ U[0, 2 pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcSpec {
    pub n_terms: usize,
    pub min_wavenumber: u32,
    pub max_wavenumber: u32,
    pub amplitude: f64,
}

impl Default for IcSpec {
    fn default() -> Self {
        Self { n_terms: 4, min_wavenumber: 1, max_wavenumber: 8, amplitude: 1.0 }
    }
}

impl IcSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_terms == 0 || self.min_wavenumber > self.max_wavenumber || !(self.amplitude > 0.0) {
            return Err(usage(format!("invalid initial-condition spec {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PdeFamily {
    /// `u_t = nu laplacian(u)`
    Diffusion,
    /// `u_t = -beta (u_x + u_y)`
    Advection,
}

impl fmt::Display for PdeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PdeFamily::Diffusion => "diffusion",
            PdeFamily::Advection => "advection",
        })
    }
}

impl FromStr for PdeFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffusion" => Ok(Self::Diffusion),
            "advection" => Ok(Self::Advection),
            other => Err(usage(format!("unknown PDE family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeSpec {
    pub family: PdeFamily,
    /// `nu` for diffusion, `beta` for advection
    pub coefficient: f64,
    pub dims: usize,
    /// grid points per axis
    pub resolution: usize,
    pub record_dt: f64,
    pub horizon: f64,
    /// implicit Euler step (diffusion only)
    pub solver_dt: f64,
}

impl PdeSpec {
    pub fn new(family: PdeFamily, coefficient: f64, dims: usize, resolution: usize) -> Self {
        Self { family, coefficient, dims, resolution, record_dt: 0.05, horizon: 1.0, solver_dt: 0.001 }
    }

    pub fn n_snapshots(&self) -> usize {
        (self.horizon / self.record_dt).round() as usize + 1
    }

    pub fn steps_per_record(&self) -> usize {
        (self.record_dt / self.solver_dt).round() as usize
    }

    pub fn spatial(&self) -> Vec<usize> {
        vec![self.resolution; self.dims]
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dims) {
            return Err(usage(format!("dims must be 1 or 2, got {}", self.dims)));
        }
        if self.resolution < 2 {
            return Err(usage("resolution must be at least 2"));
        }
        if !(self.coefficient.is_finite() && self.coefficient >= 0.0) {
            return Err(usage("PDE coefficient must be finite and non-negative"));
        }
        let intervals = self.horizon / self.record_dt;
        if (intervals - intervals.round()).abs() > 1e-9 || intervals.round() < 1.0 {
            return Err(usage("horizon must be a positive multiple of record_dt"));
        }
        let steps = self.record_dt / self.solver_dt;
        if self.family == PdeFamily::Diffusion && ((steps - steps.round()).abs() > 1e-9 || steps.round() < 1.0) {
            return Err(usage("record_dt must be an integer multiple of solver_dt"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "valid" => Ok(Self::Valid),
            other => Err(usage(format!("unknown split {other:?}"))),
        }
    }
}

/// Generation metadata shared by the binary file and its JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub pde: PdeSpec,
    pub ic: IcSpec,
    pub master_seed: u64,
    pub split: Split,
}

/// `n_samples x n_snapshots x spatial` trajectories, sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset<T> {
    pub meta: DatasetMeta,
    n_samples: usize,
    n_snapshots: usize,
    spatial: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> TrajectoryDataset<T> {
    pub fn from_parts(meta: DatasetMeta, n_samples: usize, n_snapshots: usize, spatial: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let len = n_samples * n_snapshots * spatial.iter().product::<usize>();
        if data.len() != len {
            return Err(usage(format!("dataset payload has {} values, expected {len}", data.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("dataset sample {}", i / (len / n_samples.max(1)).max(1))));
        }
        Ok(Self { meta, n_samples, n_snapshots, spatial, data })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_snapshots(&self) -> usize {
        self.n_snapshots
    }

    pub fn spatial(&self) -> &[usize] {
        &self.spatial
    }

    /// `[n_samples, n_snapshots, S_1, ..., S_D]`
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.n_samples, self.n_snapshots];
        s.extend(&self.spatial);
        s
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    fn grid_len(&self) -> usize {
        self.spatial.iter().product()
    }

    pub fn snapshot(&self, sample: usize, step: usize) -> Field<T> {
        assert!(sample < self.n_samples && step < self.n_snapshots, "snapshot index out of range");
        let n = self.grid_len();
        let start = (sample * self.n_snapshots + step) * n;
        let mut shape = vec![1];
        shape.extend(&self.spatial);
        Field::new(shape, self.data[start..start + n].to_vec()).expect("dataset values are finite")
    }

    /// Dataset restricted to the given trajectories, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let per = self.n_snapshots * self.grid_len();
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            if i >= self.n_samples {
                return Err(usage(format!("sample {i} out of range ({} samples)", self.n_samples)));
            }
            data.extend_from_slice(&self.data[i * per..(i + 1) * per]);
        }
        Ok(Self { meta: self.meta.clone(), n_samples: indices.len(), n_snapshots: self.n_snapshots, spatial: self.spatial.clone(), data })
    }

    /// `m` whole trajectories drawn uniformly without replacement under `seed`.
    pub fn select(&self, m: usize, seed: u64) -> Result<(Self, Vec<usize>)> {
        if m == 0 || m > self.n_samples {
            return Err(usage(format!("cannot select {m} of {} samples", self.n_samples)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let indices = sample(&mut rng, self.n_samples, m).into_vec();
        Ok((self.subset(&indices)?, indices))
    }

    /// Keeps the first `k` snapshots of every trajectory.
    pub fn truncate_snapshots(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.n_snapshots {
            return Err(usage(format!("cannot keep {k} of {} snapshots", self.n_snapshots)));
        }
        let n = self.grid_len();
        let mut data = Vec::with_capacity(self.n_samples * k * n);
        for s in 0..self.n_samples {
            let start = s * self.n_snapshots * n;
            data.extend_from_slice(&self.data[start..start + k * n]);
        }
        Ok(Self { meta: self.meta.clone(), n_samples: self.n_samples, n_snapshots: k, spatial: self.spatial.clone(), data })
    }

    pub fn cast<U: Scalar>(&self) -> TrajectoryDataset<U> {
        TrajectoryDataset {
            meta: self.meta.clone(),
            n_samples: self.n_samples,
            n_snapshots: self.n_snapshots,
            spatial: self.spatial.clone(),
            data: self.data.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect(),
        }
    }
}

/// Every consecutive `(u_t, u_{t+1})` pair, sample-major, `t` ascending.
pub fn pairs<T: Scalar>(dataset: &TrajectoryDataset<T>) -> Vec<TrainingPair<T>> {
    let mut out = Vec::with_capacity(dataset.n_samples * dataset.n_snapshots.saturating_sub(1));
    for s in 0..dataset.n_samples {
        for t in 0..dataset.n_snapshots - 1 {
            out.push(TrainingPair { input: dataset.snapshot(s, t), target: dataset.snapshot(s, t + 1) });
        }
    }
    out
}

/// Seed of sample `index`, independent of generation order.
pub fn sample_seed(master_seed: u64, split: Split, index: usize) -> u64 {
    let tag = match split {
        Split::Train => 0x7472_6169_6e00_0000u64,
        Split::Valid => 0x7661_6c69_6400_0000u64,
    };
    let mut z = master_seed ^ tag ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sample_ic(spec: &IcSpec, resolution: usize, dims: usize, seed: u64) -> Result<Field<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<(f64, Vec<f64>, f64)> = (0..spec.n_terms)
        .map(|_| {
            let a = rng.random_range(-spec.amplitude..=spec.amplitude);
            let n = (0..dims).map(|_| rng.random_range(spec.min_wavenumber..=spec.max_wavenumber) as f64).collect();
            let phi = rng.random_range(0.0..2.0 * PI);
            (a, n, phi)
        })
        .collect();
    let mut shape = vec![1];
    shape.extend(std::iter::repeat_n(resolution, dims));
    Field::from_fn(shape, |_, x| {
        terms
            .iter()
            .map(|(a, n, phi)| a * (2.0 * PI * n.iter().zip(x).map(|(n, x)| n * x).sum::<f64>() + phi).sin())
            .sum()
    })
}

/// Full complex spectrum over all spatial axes of a one-channel field.
struct GridSpectrum {
    spatial: Vec<usize>,
    coeffs: Vec<Complex<f64>>,
}

fn fft_all_axes(spatial: &[usize], data: &mut [Complex<f64>], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let total: usize = spatial.iter().product();
    for (d, &n) in spatial.iter().enumerate() {
        let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
        let inner: usize = spatial[d + 1..].iter().product();
        let outer = total / (n * inner);
        let mut line = vec![Complex::new(0.0, 0.0); n];
        for o in 0..outer {
            for i in 0..inner {
                for (j, v) in line.iter_mut().enumerate() {
                    *v = data[(o * n + j) * inner + i];
                }
                fft.process(&mut line);
                for (j, v) in line.iter().enumerate() {
                    data[(o * n + j) * inner + i] = *v;
                }
            }
        }
    }
}

impl GridSpectrum {
    fn forward(u: &Field<f64>) -> Self {
        let spatial = u.spatial().to_vec();
        let mut coeffs: Vec<Complex<f64>> = u.data().iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft_all_axes(&spatial, &mut coeffs, false);
        Self { spatial, coeffs }
    }

    fn inverse(&self) -> Result<Field<f64>> {
        let mut data = self.coeffs.clone();
        fft_all_axes(&self.spatial, &mut data, true);
        let scale = 1.0 / data.len() as f64;
        let mut shape = vec![1];
        shape.extend(&self.spatial);
        Field::new(shape, data.into_iter().map(|c| c.re * scale).collect())
    }

    /// Signed integer wavenumber vector of flat index `idx`.
    fn wavenumbers(&self, idx: usize) -> Vec<f64> {
        let mut rem = idx;
        let mut out = vec![0.0; self.spatial.len()];
        for d in (0..self.spatial.len()).rev() {
            let n = self.spatial[d];
            let k = rem % n;
            rem /= n;
            out[d] = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        }
        out
    }

    fn diffusion_factors(&self, nu: f64, dt: f64) -> Vec<f64> {
        (0..self.coeffs.len())
            .map(|idx| {
                let k2: f64 = self.wavenumbers(idx).iter().map(|n| (2.0 * PI * n).powi(2)).sum();
                1.0 / (1.0 + nu * dt * k2)
            })
            .collect()
    }
}

/// One implicit Euler step of `u_t = nu laplacian(u)`, exact in space.
pub fn diffusion_step(u: &Field<f64>, nu: f64, dt: f64) -> Result<Field<f64>> {
    if u.channels() != 1 {
        return Err(usage("diffusion acts on one-channel fields"));
    }
    let mut spec = GridSpectrum::forward(u);
    let factors = spec.diffusion_factors(nu, dt);
    for (c, f) in spec.coeffs.iter_mut().zip(factors) {
        *c *= f;
    }
    spec.inverse()
}

/// Exact periodic advection: `u(x, t) = u0(x - beta t)` with the same shift on every axis.
pub fn advect_exact(u0: &Field<f64>, beta: f64, t: f64) -> Result<Field<f64>> {
    if u0.channels() != 1 {
        return Err(usage("advection acts on one-channel fields"));
    }
    let mut spec = GridSpectrum::forward(u0);
    let shift = beta * t;
    for idx in 0..spec.coeffs.len() {
        let n_sum: f64 = spec.wavenumbers(idx).iter().sum();
        let phase = -2.0 * PI * n_sum * shift;
        spec.coeffs[idx] *= Complex::new(phase.cos(), phase.sin());
    }
    spec.inverse()
}

fn trajectory(pde: &PdeSpec, u0: Field<f64>) -> Result<Vec<Field<f64>>> {
    let n_snap = pde.n_snapshots();
    let mut snaps = Vec::with_capacity(n_snap);
    match pde.family {
        PdeFamily::Diffusion => {
            let mut spec = GridSpectrum::forward(&u0);
            let factors = spec.diffusion_factors(pde.coefficient, pde.solver_dt);
            snaps.push(u0);
            for _ in 1..n_snap {
                for _ in 0..pde.steps_per_record() {
                    for (c, f) in spec.coeffs.iter_mut().zip(&factors) {
                        *c *= *f;
                    }
                }
                snaps.push(spec.inverse()?);
            }
        }
        PdeFamily::Advection => {
            for k in 0..n_snap {
                snaps.push(advect_exact(&u0, pde.coefficient, pde.record_dt * k as f64)?);
            }
        }
    }
    Ok(snaps)
}

/// Generates `n_samples` trajectories of `n_snapshots` recorded states each.
pub fn generate(pde: &PdeSpec, ic: &IcSpec, n_samples: usize, master_seed: u64, split: Split) -> Result<TrajectoryDataset<f64>> {
    pde.validate()?;
    ic.validate()?;
    let n_snap = pde.n_snapshots();
    let trajectories: Vec<Result<Vec<Field<f64>>>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let u0 = sample_ic(ic, pde.resolution, pde.dims, sample_seed(master_seed, split, i))?;
            let snaps = trajectory(pde, u0)?;
            if snaps.iter().any(|s| !s.is_finite()) {
                return Err(Error::NonFinite(format!("generated sample {i}")));
            }
            Ok(snaps)
        })
        .collect();
    let mut data = Vec::with_capacity(n_samples * n_snap * pde.resolution.pow(pde.dims as u32));
    for t in trajectories {
        for s in t? {
            data.extend(s.into_data());
        }
    }
    TrajectoryDataset::from_parts(
        DatasetMeta { pde: *pde, ic: *ic, master_seed, split },
        n_samples,
        n_snap,
        pde.spatial(),
        data,
    )
}
