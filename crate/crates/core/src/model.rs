//! Factorized Fourier neural operator: parameters, initialization, forward
//! pass and parameter accounting.
//!
//! A model maps one state `u_t` (one channel) to the next state:
//! `Q(L_{L-1}(... L_0(P(u))))`, where every layer is
//! `z + W2 act(W1 K(z) + b1) + b2` and `K` sums one truncated spectral
//! convolution per spatial axis.

use std::any::{Any, TypeId};
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::linalg::{gemm, MatMut, MatRef};
use crate::scalar::{lit, Scalar};
use crate::spectral::{AxisLayout, Field};

pub const AXIS_NAMES: [&str; 2] = ["x", "y"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    /// tanh approximation
    Gelu,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Gelu => {
                let inner = lit::<T>(GELU_C) * (x + lit::<T>(0.044715) * x * x * x);
                lit::<T>(0.5) * x * (T::one() + inner.tanh())
            }
        }
    }

    #[inline]
    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Gelu => {
                let x2 = x * x;
                let inner = lit::<T>(GELU_C) * (x + lit::<T>(0.044715) * x2 * x);
                let t = inner.tanh();
                let d_inner = lit::<T>(GELU_C) * (T::one() + lit::<T>(3.0 * 0.044715) * x2);
                lit::<T>(0.5) * (T::one() + t) + lit::<T>(0.5) * x * (T::one() - t * t) * d_inner
            }
        }
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Self::Relu),
            "gelu" => Ok(Self::Gelu),
            other => Err(usage(format!("unknown activation {other:?}"))),
        }
    }
}

/// Architecture hyperparameters. Input and output always have one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FfnoConfig {
    pub dims: usize,
    pub layers: usize,
    pub width: usize,
    pub modes: usize,
    pub ff_expansion: usize,
    pub activation: Activation,
}

impl FfnoConfig {
    /// 4 layers, width 128, 16 modes.
    pub fn reference(dims: usize) -> Self {
        Self { dims, layers: 4, width: 128, modes: 16, ff_expansion: 2, activation: Activation::Relu }
    }

    pub fn with_dims(self, dims: usize) -> Self {
        Self { dims, ..self }
    }

    pub fn hidden(&self) -> usize {
        self.ff_expansion * self.width
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dims) {
            return Err(usage(format!("dims must be 1 or 2, got {}", self.dims)));
        }
        for (name, v) in [
            ("layers", self.layers),
            ("width", self.width),
            ("modes", self.modes),
            ("ff_expansion", self.ff_expansion),
        ] {
            if v == 0 {
                return Err(usage(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Checks that a field with `channels` channels fits this model.
    pub fn check_input(&self, shape: &[usize], channels: usize) -> Result<()> {
        if shape.len() != self.dims + 1 || shape[0] != channels {
            let mut expected = vec![channels];
            expected.extend(std::iter::repeat_n(2 * self.modes, self.dims));
            return Err(Error::Shape { expected, actual: shape.to_vec() });
        }
        if let Some(s) = shape[1..].iter().find(|&&s| s < 2 * self.modes) {
            return Err(usage(format!(
                "spatial extent {s} is smaller than twice the {} retained modes",
                self.modes
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AffinePart {
    Weight,
    Bias,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FfPart {
    W1,
    B1,
    W2,
    B2,
}

impl FfPart {
    pub const ALL: [FfPart; 4] = [FfPart::W1, FfPart::B1, FfPart::W2, FfPart::B2];

    pub fn is_bias(self) -> bool {
        matches!(self, FfPart::B1 | FfPart::B2)
    }
}

/// Canonical address of one parameter tensor, e.g. `layer.2.fourier.x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamPath {
    ProjIn(AffinePart),
    Fourier { layer: usize, axis: usize },
    Ff { layer: usize, part: FfPart },
    ProjOut(AffinePart),
}

impl ParamPath {
    pub fn is_bias(&self) -> bool {
        match self {
            ParamPath::ProjIn(p) | ParamPath::ProjOut(p) => *p == AffinePart::Bias,
            ParamPath::Ff { part, .. } => part.is_bias(),
            ParamPath::Fourier { .. } => false,
        }
    }

    pub fn is_projector(&self) -> bool {
        matches!(self, ParamPath::ProjIn(_) | ParamPath::ProjOut(_))
    }

    pub fn is_fourier(&self) -> bool {
        matches!(self, ParamPath::Fourier { .. })
    }

    pub fn layer(&self) -> Option<usize> {
        match self {
            ParamPath::Fourier { layer, .. } | ParamPath::Ff { layer, .. } => Some(*layer),
            _ => None,
        }
    }
}

impl fmt::Display for ParamPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let part = |p: &AffinePart| match p {
            AffinePart::Weight => "weight",
            AffinePart::Bias => "bias",
        };
        match self {
            ParamPath::ProjIn(p) => write!(f, "proj.in.{}", part(p)),
            ParamPath::ProjOut(p) => write!(f, "proj.out.{}", part(p)),
            ParamPath::Fourier { layer, axis } => write!(f, "layer.{layer}.fourier.{}", AXIS_NAMES[*axis]),
            ParamPath::Ff { layer, part } => {
                let name = match part {
                    FfPart::W1 => "w1",
                    FfPart::B1 => "b1",
                    FfPart::W2 => "w2",
                    FfPart::B2 => "b2",
                };
                write!(f, "layer.{layer}.ff.{name}")
            }
        }
    }
}

impl FromStr for ParamPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || usage(format!("unknown parameter path {s:?}"));
        let parts: Vec<&str> = s.split('.').collect();
        let affine = |p: &str| match p {
            "weight" => Ok(AffinePart::Weight),
            "bias" => Ok(AffinePart::Bias),
            _ => Err(bad()),
        };
        match parts.as_slice() {
            ["proj", "in", p] => Ok(ParamPath::ProjIn(affine(p)?)),
            ["proj", "out", p] => Ok(ParamPath::ProjOut(affine(p)?)),
            ["layer", l, "fourier", a] => {
                let layer = l.parse().map_err(|_| bad())?;
                let axis = AXIS_NAMES.iter().position(|n| n == a).ok_or_else(bad)?;
                Ok(ParamPath::Fourier { layer, axis })
            }
            ["layer", l, "ff", p] => {
                let layer = l.parse().map_err(|_| bad())?;
                let part = match *p {
                    "w1" => FfPart::W1,
                    "b1" => FfPart::B1,
                    "w2" => FfPart::W2,
                    "b2" => FfPart::B2,
                    _ => return Err(bad()),
                };
                Ok(ParamPath::Ff { layer, part })
            }
            _ => Err(bad()),
        }
    }
}

/// Set of trainable parameter paths.
pub type Mask = BTreeSet<ParamPath>;

/// Every parameter path of a model, in canonical order.
pub fn all_paths(cfg: &FfnoConfig) -> Vec<ParamPath> {
    let mut paths = vec![ParamPath::ProjIn(AffinePart::Weight), ParamPath::ProjIn(AffinePart::Bias)];
    for layer in 0..cfg.layers {
        for axis in 0..cfg.dims {
            paths.push(ParamPath::Fourier { layer, axis });
        }
        for part in FfPart::ALL {
            paths.push(ParamPath::Ff { layer, part });
        }
    }
    paths.push(ParamPath::ProjOut(AffinePart::Weight));
    paths.push(ParamPath::ProjOut(AffinePart::Bias));
    paths
}

pub fn full_mask(cfg: &FfnoConfig) -> Mask {
    all_paths(cfg).into_iter().collect()
}

/// Pointwise affine map `out x in` applied over every grid position.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// row-major `[out_dim, in_dim]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Affine<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weight: vec![T::zero(); in_dim * out_dim], bias: vec![T::zero(); out_dim] }
    }

    /// `x` is channel-major `[in_dim, n]`; returns `[out_dim, n]`.
    pub(crate) fn apply(&self, x: &[T], n: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(self.out_dim * n);
        for b in &self.bias {
            out.extend(std::iter::repeat_n(*b, n));
        }
        gemm(
            T::one(),
            MatRef::row_major(&self.weight, self.out_dim, self.in_dim),
            MatRef::row_major(x, self.in_dim, n),
            T::one(),
            MatMut::row_major(&mut out, self.out_dim, n),
        );
        out
    }
}

/// Complex Fourier weights of one axis, `[H_out, H_in, M]`, as paired real tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralWeights<T> {
    pub width: usize,
    pub modes: usize,
    pub re: Vec<T>,
    pub im: Vec<T>,
}

impl<T: Scalar> SpectralWeights<T> {
    pub fn zeros(width: usize, modes: usize) -> Self {
        let n = width * width * modes;
        Self { width, modes, re: vec![T::zero(); n], im: vec![T::zero(); n] }
    }

    #[inline]
    pub fn index(&self, out: usize, inp: usize, k: usize) -> usize {
        (out * self.width + inp) * self.modes + k
    }

    /// Strided view of the real (`im = false`) or imaginary part of mode `k`.
    pub(crate) fn mode(&self, k: usize, im: bool) -> MatRef<'_, T> {
        let data = if im { &self.im } else { &self.re };
        MatRef::new(data, k, self.width, self.width, self.width * self.modes, self.modes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    /// one entry per spatial axis
    pub fourier: Vec<SpectralWeights<T>>,
    pub ff1: Affine<T>,
    pub ff2: Affine<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfnoParams<T> {
    pub config: FfnoConfig,
    pub proj_in: Affine<T>,
    pub layers: Vec<LayerParams<T>>,
    pub proj_out: Affine<T>,
}

impl<T: Scalar> FfnoParams<T> {
    pub fn zeros(config: FfnoConfig) -> Result<Self> {
        config.validate()?;
        let (h, e) = (config.width, config.hidden());
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                fourier: (0..config.dims).map(|_| SpectralWeights::zeros(h, config.modes)).collect(),
                ff1: Affine::zeros(h, e),
                ff2: Affine::zeros(e, h),
            })
            .collect();
        Ok(Self { config, proj_in: Affine::zeros(1, h), layers, proj_out: Affine::zeros(h, 1) })
    }

    pub fn paths(&self) -> Vec<ParamPath> {
        all_paths(&self.config)
    }

    /// Real slices backing `path`: one for real tensors, `[re, im]` for
    /// Fourier weights.
    pub fn slices(&self, path: &ParamPath) -> Option<Vec<&[T]>> {
        Some(match *path {
            ParamPath::ProjIn(AffinePart::Weight) => vec![&self.proj_in.weight[..]],
            ParamPath::ProjIn(AffinePart::Bias) => vec![&self.proj_in.bias[..]],
            ParamPath::ProjOut(AffinePart::Weight) => vec![&self.proj_out.weight[..]],
            ParamPath::ProjOut(AffinePart::Bias) => vec![&self.proj_out.bias[..]],
            ParamPath::Fourier { layer, axis } => {
                let w = self.layers.get(layer)?.fourier.get(axis)?;
                vec![&w.re[..], &w.im[..]]
            }
            ParamPath::Ff { layer, part } => {
                let l = self.layers.get(layer)?;
                vec![match part {
                    FfPart::W1 => &l.ff1.weight[..],
                    FfPart::B1 => &l.ff1.bias[..],
                    FfPart::W2 => &l.ff2.weight[..],
                    FfPart::B2 => &l.ff2.bias[..],
                }]
            }
        })
    }

    pub fn slices_mut(&mut self, path: &ParamPath) -> Option<Vec<&mut [T]>> {
        Some(match *path {
            ParamPath::ProjIn(AffinePart::Weight) => vec![&mut self.proj_in.weight[..]],
            ParamPath::ProjIn(AffinePart::Bias) => vec![&mut self.proj_in.bias[..]],
            ParamPath::ProjOut(AffinePart::Weight) => vec![&mut self.proj_out.weight[..]],
            ParamPath::ProjOut(AffinePart::Bias) => vec![&mut self.proj_out.bias[..]],
            ParamPath::Fourier { layer, axis } => {
                let w = self.layers.get_mut(layer)?.fourier.get_mut(axis)?;
                vec![&mut w.re[..], &mut w.im[..]]
            }
            ParamPath::Ff { layer, part } => {
                let l = self.layers.get_mut(layer)?;
                vec![match part {
                    FfPart::W1 => &mut l.ff1.weight[..],
                    FfPart::B1 => &mut l.ff1.bias[..],
                    FfPart::W2 => &mut l.ff2.weight[..],
                    FfPart::B2 => &mut l.ff2.bias[..],
                }]
            }
        })
    }

    /// Shape of the tensor at `path` (complex tensors report their complex shape).
    pub fn tensor_shape(&self, path: &ParamPath) -> Vec<usize> {
        tensor_shape(&self.config, path)
    }

    pub fn is_finite(&self) -> bool {
        self.paths()
            .iter()
            .all(|p| self.slices(p).unwrap().iter().all(|s| s.iter().all(|v| v.is_finite())))
    }

    pub fn cast<U: Scalar>(&self) -> FfnoParams<U> {
        let mut out = FfnoParams::<U>::zeros(self.config).expect("config already validated");
        for path in self.paths() {
            let src = self.slices(&path).unwrap();
            for (dst, src) in out.slices_mut(&path).unwrap().into_iter().zip(src) {
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = U::from_f64_lossy(s.as_f64());
                }
            }
        }
        out
    }
}

/// Logical shape of a parameter tensor; Fourier weights are `[H, H, M]` complex.
pub fn tensor_shape(c: &FfnoConfig, path: &ParamPath) -> Vec<usize> {
    match path {
        ParamPath::ProjIn(AffinePart::Weight) => vec![c.width, 1],
        ParamPath::ProjIn(AffinePart::Bias) => vec![c.width],
        ParamPath::ProjOut(AffinePart::Weight) => vec![1, c.width],
        ParamPath::ProjOut(AffinePart::Bias) => vec![1],
        ParamPath::Fourier { .. } => vec![c.width, c.width, c.modes],
        ParamPath::Ff { part, .. } => match part {
            FfPart::W1 => vec![c.hidden(), c.width],
            FfPart::B1 => vec![c.hidden()],
            FfPart::W2 => vec![c.width, c.hidden()],
            FfPart::B2 => vec![c.width],
        },
    }
}

/// Deterministic initialization: Fourier real and imaginary parts
/// `U[-1/H, 1/H]`, affine weights `U[-sqrt(1/fan_in), sqrt(1/fan_in)]`,
/// zero biases.
pub fn init_params<T: Scalar>(cfg: &FfnoConfig, seed: u64) -> Result<FfnoParams<T>> {
    let mut params = FfnoParams::zeros(*cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fourier_bound = 1.0 / cfg.width as f64;
    for path in all_paths(cfg) {
        if path.is_bias() {
            continue;
        }
        let bound = match path {
            ParamPath::Fourier { .. } => fourier_bound,
            ParamPath::ProjIn(_) => 1.0,
            ParamPath::ProjOut(_) => (1.0 / cfg.width as f64).sqrt(),
            ParamPath::Ff { part: FfPart::W1, .. } => (1.0 / cfg.width as f64).sqrt(),
            ParamPath::Ff { .. } => (1.0 / cfg.hidden() as f64).sqrt(),
        };
        for slice in params.slices_mut(&path).unwrap() {
            for v in slice.iter_mut() {
                *v = T::from_f64_lossy(rng.random_range(-bound..=bound));
            }
        }
    }
    Ok(params)
}

/// Truncated half spectra of a latent field along one axis, stored
/// `[mode][channel][line]` so each mode is a dense `H x lines` matrix.
#[derive(Debug, Clone)]
pub(crate) struct ModeBlock<T> {
    pub re: Vec<T>,
    pub im: Vec<T>,
    pub channels: usize,
    pub lines: usize,
}

impl<T: Scalar> ModeBlock<T> {
    pub(crate) fn zeros(modes: usize, channels: usize, lines: usize) -> Self {
        let n = modes * channels * lines;
        Self { re: vec![T::zero(); n], im: vec![T::zero(); n], channels, lines }
    }

    pub(crate) fn mode(&self, k: usize, im: bool) -> MatRef<'_, T> {
        let stride = self.channels * self.lines;
        let data = if im { &self.im } else { &self.re };
        MatRef::new(data, k * stride, self.channels, self.lines, self.lines, 1)
    }

    pub(crate) fn mode_mut(&mut self, k: usize, im: bool) -> MatMut<'_, T> {
        let stride = self.channels * self.lines;
        let (channels, lines) = (self.channels, self.lines);
        let data = if im { &mut self.im } else { &mut self.re };
        MatMut::new(data, k * stride, channels, lines, lines, 1)
    }
}

/// Line geometry of a `[H, S_1, ..., S_D]` latent along spatial axis `axis`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LineGeometry {
    pub channels: usize,
    /// spatial positions before the axis (product)
    pub outer: usize,
    pub n: usize,
    pub inner: usize,
}

impl LineGeometry {
    pub(crate) fn new(shape: &[usize], axis: usize) -> Self {
        let lay = AxisLayout::of(shape, axis + 1);
        Self { channels: shape[0], outer: lay.outer / shape[0], n: lay.n, inner: lay.inner }
    }

    pub(crate) fn lines(&self) -> usize {
        self.outer * self.inner
    }
}

/// First `modes` rows of the real DFT of length `n` and of its
/// half-spectrum inverse, each `[modes, n]`. With few retained modes a dense
/// basis product beats one FFT call per line.
pub(crate) struct TruncatedDft<T> {
    fwd_re: Vec<T>,
    fwd_im: Vec<T>,
    inv_re: Vec<T>,
    inv_im: Vec<T>,
}

type BasisCache = Mutex<HashMap<(TypeId, usize, usize), Arc<dyn Any + Send + Sync>>>;

impl<T: Scalar> TruncatedDft<T> {
    fn build(n: usize, modes: usize) -> Self {
        let len = modes * n;
        let (mut fwd_re, mut fwd_im) = (Vec::with_capacity(len), Vec::with_capacity(len));
        let (mut inv_re, mut inv_im) = (Vec::with_capacity(len), Vec::with_capacity(len));
        for k in 0..modes {
            let weight = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
            for j in 0..n {
                let theta = 2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
                let (sin, cos) = theta.sin_cos();
                fwd_re.push(lit(cos));
                fwd_im.push(lit(-sin));
                inv_re.push(lit(weight * cos));
                inv_im.push(lit(-weight * sin));
            }
        }
        Self { fwd_re, fwd_im, inv_re, inv_im }
    }

    pub(crate) fn get(n: usize, modes: usize) -> Arc<Self> {
        static CACHE: OnceLock<BasisCache> = OnceLock::new();
        let mut cache = CACHE.get_or_init(Default::default).lock().expect("basis cache poisoned");
        let entry = cache
            .entry((TypeId::of::<T>(), n, modes))
            .or_insert_with(|| Arc::new(Self::build(n, modes)) as Arc<dyn Any + Send + Sync>)
            .clone();
        entry.downcast::<Self>().expect("basis cache keyed by type")
    }
}

/// Forward real DFT of every line, keeping the first `modes` frequencies.
pub(crate) fn truncated_rfft<T: Scalar>(z: &[T], geo: LineGeometry, modes: usize) -> ModeBlock<T> {
    let dft = TruncatedDft::<T>::get(geo.n, modes);
    let (n, lines, ch) = (geo.n, geo.lines(), geo.channels);
    let mut block = ModeBlock::zeros(modes, ch, lines);
    let (one, zero) = (T::one(), T::zero());
    let mode_stride = ch * lines;
    if geo.inner == 1 {
        // rows (channel, line) are contiguous lines of length n
        let src = MatRef::row_major(z, ch * lines, n);
        for (basis, dst) in [(&dft.fwd_re, &mut block.re), (&dft.fwd_im, &mut block.im)] {
            let b = MatRef::row_major(basis, modes, n).t();
            gemm(one, src, b, zero, MatMut::new(dst, 0, ch * lines, modes, 1, mode_stride));
        }
    } else {
        for c in 0..ch {
            for o in 0..geo.outer {
                let src = MatRef::new(z, (c * geo.outer + o) * n * geo.inner, n, geo.inner, geo.inner, 1);
                let off = c * lines + o * geo.inner;
                for (basis, dst) in [(&dft.fwd_re, &mut block.re), (&dft.fwd_im, &mut block.im)] {
                    let b = MatRef::row_major(basis, modes, n);
                    gemm(one, b, src, zero, MatMut::new(dst, off, modes, geo.inner, mode_stride, 1));
                }
            }
        }
    }
    block
}

/// `out += scale * c2r(block)` line by line (frequencies beyond the block are zero).
pub(crate) fn accumulate_inverse<T: Scalar>(block: &ModeBlock<T>, modes: usize, geo: LineGeometry, scale: T, out: &mut [T]) {
    let dft = TruncatedDft::<T>::get(geo.n, modes);
    let (n, lines, ch) = (geo.n, geo.lines(), geo.channels);
    let one = T::one();
    let mode_stride = ch * lines;
    if geo.inner == 1 {
        for (basis, src) in [(&dft.inv_re, &block.re), (&dft.inv_im, &block.im)] {
            let a = MatRef::new(src, 0, ch * lines, modes, 1, mode_stride);
            let b = MatRef::row_major(basis, modes, n);
            gemm(scale, a, b, one, MatMut::row_major(out, ch * lines, n));
        }
    } else {
        for c in 0..ch {
            for o in 0..geo.outer {
                let off = c * lines + o * geo.inner;
                let dst_off = (c * geo.outer + o) * n * geo.inner;
                for (basis, src) in [(&dft.inv_re, &block.re), (&dft.inv_im, &block.im)] {
                    let a = MatRef::row_major(basis, modes, n).t();
                    let b = MatRef::new(src, off, modes, geo.inner, mode_stride, 1);
                    gemm(scale, a, b, one, MatMut::new(out, dst_off, n, geo.inner, geo.inner, 1));
                }
            }
        }
    }
}

/// Complex per-mode product `Y_k = W_k Z_k` (or `W_k^H Z_k` when `adjoint`).
pub(crate) fn mix_modes<T: Scalar>(w: &SpectralWeights<T>, z: &ModeBlock<T>, adjoint: bool) -> ModeBlock<T> {
    let mut y = ModeBlock::zeros(w.modes, w.width, z.lines);
    let one = T::one();
    for k in 0..w.modes {
        let (wr, wi) = if adjoint { (w.mode(k, false).t(), w.mode(k, true).t()) } else { (w.mode(k, false), w.mode(k, true)) };
        // conj(W)^T flips the sign of the imaginary contribution
        let s = if adjoint { -one } else { one };
        let (zr, zi) = (z.mode(k, false), z.mode(k, true));
        gemm(one, wr, zr, T::zero(), y.mode_mut(k, false));
        gemm(-s, wi, zi, one, y.mode_mut(k, false));
        gemm(one, wr, zi, T::zero(), y.mode_mut(k, true));
        gemm(s, wi, zr, one, y.mode_mut(k, true));
    }
    y
}

/// Per-axis intermediates of one factorized spectral convolution.
pub(crate) struct SpectralTape<T> {
    pub spectra: Vec<ModeBlock<T>>,
}

pub(crate) fn spectral_conv_taped<T: Scalar>(
    z: &Field<T>,
    weights: &[SpectralWeights<T>],
    modes: usize,
) -> Result<(Field<T>, SpectralTape<T>)> {
    if weights.len() != z.dims() {
        return Err(usage(format!("{} axis weights for a {}-D field", weights.len(), z.dims())));
    }
    let width = z.channels();
    if let Some(w) = weights.iter().find(|w| w.width != width || w.modes != modes) {
        return Err(usage(format!(
            "spectral weights are {}x{}x{}, latent has {width} channels and {modes} modes",
            w.width, w.width, w.modes
        )));
    }
    let mut out = vec![T::zero(); z.data().len()];
    let mut spectra = Vec::with_capacity(weights.len());
    for (axis, w) in weights.iter().enumerate() {
        let geo = LineGeometry::new(z.shape(), axis);
        if modes > geo.n / 2 + 1 {
            return Err(usage(format!("{modes} modes exceed the {} frequencies of axis {axis}", geo.n / 2 + 1)));
        }
        let spec = truncated_rfft(z.data(), geo, modes);
        let mixed = mix_modes(w, &spec, false);
        accumulate_inverse(&mixed, modes, geo, T::one() / lit::<T>(geo.n as f64), &mut out);
        spectra.push(spec);
    }
    Ok((Field::new(z.shape().to_vec(), out)?, SpectralTape { spectra }))
}

/// `sum_d IFFT_d(R_d . FFT_d(z))` with only the first `modes` frequencies of
/// each axis transformed.
pub fn factorized_spectral_conv<T: Scalar>(
    z: &Field<T>,
    weights: &[SpectralWeights<T>],
    modes: usize,
) -> Result<Field<T>> {
    spectral_conv_taped(z, weights, modes).map(|(out, _)| out)
}

/// Intermediates of one layer kept for the backward pass.
pub(crate) struct LayerTape<T> {
    pub input: Field<T>,
    pub spectral: SpectralTape<T>,
    /// `K(z)`, `[H, N]`
    pub conv: Vec<T>,
    /// `W1 K(z) + b1`, `[hidden, N]`
    pub pre_act: Vec<T>,
}

pub(crate) fn ffno_layer_taped<T: Scalar>(
    z: Field<T>,
    layer: &LayerParams<T>,
    cfg: &FfnoConfig,
) -> Result<(Field<T>, LayerTape<T>)> {
    cfg.check_input(z.shape(), cfg.width)?;
    let n = z.grid_len();
    let (conv, spectral) = spectral_conv_taped(&z, &layer.fourier, cfg.modes)?;
    let conv = conv.into_data();
    let pre_act = layer.ff1.apply(&conv, n);
    let act: Vec<T> = pre_act.iter().map(|&v| cfg.activation.apply(v)).collect();
    let mut out = layer.ff2.apply(&act, n);
    for (o, zi) in out.iter_mut().zip(z.data()) {
        *o += *zi;
    }
    let out = Field::new(z.shape().to_vec(), out)?;
    Ok((out, LayerTape { input: z, spectral, conv, pre_act }))
}

/// `z + W2 act(W1 K(z) + b1) + b2`.
pub fn ffno_layer<T: Scalar>(z: &Field<T>, layer: &LayerParams<T>, cfg: &FfnoConfig) -> Result<Field<T>> {
    ffno_layer_taped(z.clone(), layer, cfg).map(|(out, _)| out)
}

pub(crate) struct ForwardTape<T> {
    pub input: Field<T>,
    pub layers: Vec<LayerTape<T>>,
    pub last_latent: Field<T>,
}

pub(crate) fn forward_taped<T: Scalar>(params: &FfnoParams<T>, u: &Field<T>) -> Result<(Field<T>, ForwardTape<T>)> {
    let cfg = &params.config;
    cfg.check_input(u.shape(), 1)?;
    let n = u.grid_len();
    let mut latent_shape = u.shape().to_vec();
    latent_shape[0] = cfg.width;
    let mut z = Field::new(latent_shape, params.proj_in.apply(u.data(), n))?;
    let mut layers = Vec::with_capacity(cfg.layers);
    for layer in &params.layers {
        let (next, tape) = ffno_layer_taped(z, layer, cfg)?;
        layers.push(tape);
        z = next;
    }
    let out = Field::new(u.shape().to_vec(), params.proj_out.apply(z.data(), n))?;
    Ok((out, ForwardTape { input: u.clone(), layers, last_latent: z }))
}

/// Maps a one-channel state to the predicted next state on the same grid.
pub fn forward<T: Scalar>(params: &FfnoParams<T>, u: &Field<T>) -> Result<Field<T>> {
    forward_taped(params, u).map(|(out, _)| out)
}

/// Exact parameter accounting. Complex Fourier entries count as one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub fourier_complex_per_layer: usize,
    pub ff_real_per_layer: usize,
    pub projector_real: usize,
    /// complex Fourier entries inside the mask
    pub trainable_fourier_complex: usize,
    /// all trainable entries, complex counted once
    pub total_trainable: usize,
}

pub fn param_count(cfg: &FfnoConfig, factorized: bool, mask: Option<&Mask>) -> ParamCount {
    let (h, e, m) = (cfg.width, cfg.hidden(), cfg.modes);
    let per_axis = h * h * m;
    let fourier_complex_per_layer = if factorized { per_axis * cfg.dims } else { h * h * m.pow(cfg.dims as u32) };
    let ff_real_per_layer = h * e + e + e * h + h;
    let projector_real = (h + h) + (h + 1);
    let full = full_mask(cfg);
    let mask = mask.unwrap_or(&full);
    let mut trainable_fourier_complex = 0;
    let mut total_trainable = 0;
    for layer in 0..cfg.layers {
        let fourier_paths = (0..cfg.dims).filter(|&axis| mask.contains(&ParamPath::Fourier { layer, axis })).count();
        let fourier = if factorized {
            fourier_paths * per_axis
        } else if fourier_paths > 0 {
            fourier_complex_per_layer
        } else {
            0
        };
        trainable_fourier_complex += fourier;
        total_trainable += fourier;
    }
    for path in mask {
        if !path.is_fourier() {
            total_trainable += tensor_shape(cfg, path).iter().product::<usize>();
        }
    }
    ParamCount { fourier_complex_per_layer, ff_real_per_layer, projector_real, trainable_fourier_complex, total_trainable }
}
