//! Real fields on periodic grids and single-axis real Fourier transforms.
//!
//! Convention: the forward transform is unnormalized,
//! `F[k] = sum_j f[j] exp(-2 pi i j k / S)`, and the inverse carries the
//! `1/S` factor. Only the non-negative frequencies `0..=S/2` are stored; the
//! negative half is implied by conjugate symmetry.

use std::sync::Arc;

use num_complex::Complex;
use realfft::{ComplexToReal, RealToComplex};

use crate::error::{usage, Error, Result};
use crate::scalar::{lit, Scalar};

/// A real sample on a uniform periodic grid over `[0,1)^D`, laid out
/// row-major as `[channels, S_1, ..., S_D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if !(2..=3).contains(&shape.len()) {
        return Err(usage(format!(
            "field shape must be [C, S1] or [C, S1, S2], got {shape:?}"
        )));
    }
    if shape.contains(&0) {
        return Err(usage(format!("field shape has an empty axis: {shape:?}")));
    }
    Ok(())
}

impl<T: Scalar> Field<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        check_shape(&shape)?;
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::Usage(format!(
                "field data has {} entries, shape {shape:?} needs {len}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field data".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        check_shape(&shape)?;
        let len = shape.iter().product();
        Ok(Self { shape, data: vec![T::zero(); len] })
    }

    /// Builds a field by evaluating `f(channel, grid coordinates in [0,1)^D)`.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize, &[f64]) -> f64) -> Result<Self> {
        check_shape(&shape)?;
        let spatial = &shape[1..];
        let n: usize = spatial.iter().product();
        let mut data = Vec::with_capacity(shape[0] * n);
        let mut coords = vec![0.0; spatial.len()];
        for c in 0..shape[0] {
            for flat in 0..n {
                let mut rem = flat;
                for d in (0..spatial.len()).rev() {
                    coords[d] = (rem % spatial[d]) as f64 / spatial[d] as f64;
                    rem /= spatial[d];
                }
                data.push(T::from_f64_lossy(f(c, &coords)));
            }
        }
        Self::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    /// Spatial extents `[S_1, ..., S_D]`.
    pub fn spatial(&self) -> &[usize] {
        &self.shape[1..]
    }

    pub fn dims(&self) -> usize {
        self.shape.len() - 1
    }

    /// Number of grid points per channel.
    pub fn grid_len(&self) -> usize {
        self.spatial().iter().product()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.grid_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt()
    }

    pub fn cast<U: Scalar>(&self) -> Field<U> {
        Field {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Half spectrum of a field along one spatial axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisSpectrum<T> {
    coeffs: Vec<Complex<T>>,
    /// Field shape with the transformed extent replaced by `S/2 + 1`.
    shape: Vec<usize>,
    axis: usize,
    source_len: usize,
}

impl<T: Scalar> AxisSpectrum<T> {
    pub fn new(coeffs: Vec<Complex<T>>, shape: Vec<usize>, axis: usize, source_len: usize) -> Result<Self> {
        check_shape(&shape)?;
        if axis + 1 >= shape.len() {
            return Err(usage(format!("axis {axis} out of range for spectrum shape {shape:?}")));
        }
        if shape[axis + 1] != source_len / 2 + 1 {
            return Err(usage(format!(
                "spectrum extent {} inconsistent with source length {source_len}",
                shape[axis + 1]
            )));
        }
        if coeffs.len() != shape.iter().product::<usize>() {
            return Err(usage("spectrum coefficient count does not match its shape"));
        }
        Ok(Self { coeffs, shape, axis, source_len })
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.coeffs
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    /// Number of stored frequencies, `S/2 + 1`.
    pub fn n_freqs(&self) -> usize {
        self.shape[self.axis + 1]
    }

    /// Frequency index of the flat coefficient position `idx`.
    pub fn freq_of(&self, idx: usize) -> usize {
        let inner: usize = self.shape[self.axis + 2..].iter().product();
        (idx / inner) % self.n_freqs()
    }

    pub fn norm(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|c| c.re.as_f64().powi(2) + c.im.as_f64().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Strided decomposition of a flat array around one transformed axis:
/// index = `(outer * n + j) * inner + i`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AxisLayout {
    pub outer: usize,
    pub n: usize,
    pub inner: usize,
}

impl AxisLayout {
    pub(crate) fn of(shape: &[usize], data_axis: usize) -> Self {
        Self {
            outer: shape[..data_axis].iter().product(),
            n: shape[data_axis],
            inner: shape[data_axis + 1..].iter().product(),
        }
    }
}

/// Planned real FFT along lines of fixed length, with reusable scratch.
pub(crate) struct LineFft<T: Scalar> {
    n: usize,
    r2c: Arc<dyn RealToComplex<T>>,
    c2r: Arc<dyn ComplexToReal<T>>,
    real_buf: Vec<T>,
    spec_buf: Vec<Complex<T>>,
    scratch_fwd: Vec<Complex<T>>,
    scratch_inv: Vec<Complex<T>>,
}

impl<T: Scalar> LineFft<T> {
    pub(crate) fn new(n: usize) -> Self {
        let (r2c, c2r) = T::real_fft_plans(n);
        let scratch_fwd = r2c.make_scratch_vec();
        let scratch_inv = c2r.make_scratch_vec();
        Self {
            n,
            real_buf: vec![T::zero(); n],
            spec_buf: vec![Complex::new(T::zero(), T::zero()); n / 2 + 1],
            r2c,
            c2r,
            scratch_fwd,
            scratch_inv,
        }
    }

    pub(crate) fn n_freqs(&self) -> usize {
        self.n / 2 + 1
    }

    /// Forward transform of the line `src[start + j*stride]`; returns the half spectrum.
    pub(crate) fn forward_strided(&mut self, src: &[T], start: usize, stride: usize) -> &[Complex<T>] {
        for j in 0..self.n {
            self.real_buf[j] = src[start + j * stride];
        }
        self.r2c
            .process_with_scratch(&mut self.real_buf, &mut self.spec_buf, &mut self.scratch_fwd)
            .expect("forward fft buffer sizes");
        &self.spec_buf
    }

    /// Spectrum buffer to fill before [`LineFft::inverse_unnormalized`].
    pub(crate) fn spectrum_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.spec_buf
    }

    /// Unnormalized inverse of the current spectrum buffer. The imaginary
    /// parts of the DC and (even-length) Nyquist bins are zeroed first.
    pub(crate) fn inverse_unnormalized(&mut self) -> &[T] {
        let nf = self.n_freqs();
        self.spec_buf[0].im = T::zero();
        if self.n % 2 == 0 {
            self.spec_buf[nf - 1].im = T::zero();
        }
        self.c2r
            .process_with_scratch(&mut self.spec_buf, &mut self.real_buf, &mut self.scratch_inv)
            .expect("inverse fft buffer sizes");
        &self.real_buf
    }
}

fn check_axis<T: Scalar>(f: &Field<T>, axis: usize) -> Result<()> {
    if axis >= f.dims() {
        return Err(usage(format!("axis {axis} out of range for a {}-D field", f.dims())));
    }
    if f.spatial()[axis] < 2 {
        return Err(usage(format!("axis {axis} has extent {} < 2", f.spatial()[axis])));
    }
    Ok(())
}

/// Forward real FFT of every line of `f` along spatial axis `axis`.
pub fn rfft_axis<T: Scalar>(f: &Field<T>, axis: usize) -> Result<AxisSpectrum<T>> {
    check_axis(f, axis)?;
    let lay = AxisLayout::of(f.shape(), axis + 1);
    let nf = lay.n / 2 + 1;
    let mut shape = f.shape().to_vec();
    shape[axis + 1] = nf;
    let mut coeffs = vec![Complex::new(T::zero(), T::zero()); lay.outer * nf * lay.inner];
    let mut fft = LineFft::new(lay.n);
    for o in 0..lay.outer {
        for i in 0..lay.inner {
            let spec = fft.forward_strided(f.data(), o * lay.n * lay.inner + i, lay.inner);
            for (k, c) in spec.iter().enumerate() {
                coeffs[(o * nf + k) * lay.inner + i] = *c;
            }
        }
    }
    Ok(AxisSpectrum { coeffs, shape, axis, source_len: lay.n })
}

/// Inverse of [`rfft_axis`] including the `1/S` factor.
pub fn irfft_axis<T: Scalar>(s: &AxisSpectrum<T>) -> Result<Field<T>> {
    let n = s.source_len;
    let nf = n / 2 + 1;
    let lay = AxisLayout::of(&s.shape, s.axis + 1);
    let mut shape = s.shape.clone();
    shape[s.axis + 1] = n;
    let mut data = vec![T::zero(); lay.outer * n * lay.inner];
    let mut fft = LineFft::new(n);
    let scale = T::one() / lit::<T>(n as f64);
    let mut residue = 0.0f64;
    for o in 0..lay.outer {
        for i in 0..lay.inner {
            let buf = fft.spectrum_mut();
            for (k, b) in buf.iter_mut().enumerate() {
                *b = s.coeffs[(o * nf + k) * lay.inner + i];
            }
            residue += buf[0].im.as_f64().powi(2);
            if n % 2 == 0 {
                residue += buf[nf - 1].im.as_f64().powi(2);
            }
            let line = fft.inverse_unnormalized();
            for (j, v) in line.iter().enumerate() {
                data[(o * n + j) * lay.inner + i] = *v * scale;
            }
        }
    }
    let out = Field::new(shape, data)?;
    debug_assert!(
        residue.sqrt() / n as f64 <= 1e-5 * out.norm().max(f64::MIN_POSITIVE),
        "spectrum is not the transform of a real field"
    );
    Ok(out)
}

/// Zeroes every frequency `k >= modes`, keeping the stored shape.
pub fn truncate_modes<T: Scalar>(s: &AxisSpectrum<T>, modes: usize) -> Result<AxisSpectrum<T>> {
    if modes == 0 {
        return Err(usage("mode count must be at least 1"));
    }
    if modes > s.n_freqs() {
        return Err(usage(format!(
            "mode count {modes} exceeds the {} stored frequencies",
            s.n_freqs()
        )));
    }
    let mut out = s.clone();
    let zero = Complex::new(T::zero(), T::zero());
    for idx in 0..out.coeffs.len() {
        if s.freq_of(idx) >= modes {
            out.coeffs[idx] = zero;
        }
    }
    Ok(out)
}

/// Same contract as [`rfft_axis`], computed by explicit `O(S^2)` summation
/// in `f64`. Intended as a test oracle.
pub fn dft_oracle<T: Scalar>(f: &Field<T>, axis: usize) -> Result<AxisSpectrum<f64>> {
    check_axis(f, axis)?;
    let lay = AxisLayout::of(f.shape(), axis + 1);
    let n = lay.n;
    let nf = n / 2 + 1;
    let mut shape = f.shape().to_vec();
    shape[axis + 1] = nf;
    let mut coeffs = vec![Complex::new(0.0, 0.0); lay.outer * nf * lay.inner];
    for o in 0..lay.outer {
        for i in 0..lay.inner {
            for k in 0..nf {
                let mut acc = Complex::new(0.0, 0.0);
                for j in 0..n {
                    let v = f.data()[(o * n + j) * lay.inner + i].as_f64();
                    // exact integer reduction keeps the phase accurate for large j*k
                    let theta = -2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
                    acc += Complex::new(theta.cos(), theta.sin()) * v;
                }
                coeffs[(o * nf + k) * lay.inner + i] = acc;
            }
        }
    }
    Ok(AxisSpectrum { coeffs, shape, axis, source_len: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(shape: Vec<usize>, seed: u64) -> Field<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::from_fn(shape, |_, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn max_rel_diff(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
        let scale = b.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
    }

    #[test]
    fn constant_field_is_dc_only() {
        let f = Field::<f64>::from_fn(vec![1, 8], |_, _| 2.5).unwrap();
        let s = rfft_axis(&f, 0).unwrap();
        assert_eq!(s.coeffs().len(), 5);
        assert!((s.coeffs()[0] - Complex::new(20.0, 0.0)).norm() < 1e-12);
        for c in &s.coeffs()[1..] {
            assert!(c.norm() < 1e-12);
        }
        let o = dft_oracle(&f, 0).unwrap();
        assert!(max_rel_diff(o.coeffs(), s.coeffs()) < 1e-12);
    }

    #[test]
    fn unit_sine_lands_on_mode_one() {
        let f = Field::<f64>::from_fn(vec![1, 8], |_, x| (2.0 * PI * x[0]).sin()).unwrap();
        let s = rfft_axis(&f, 0).unwrap();
        for (k, c) in s.coeffs().iter().enumerate() {
            let want = if k == 1 { Complex::new(0.0, -4.0) } else { Complex::new(0.0, 0.0) };
            assert!((c - want).norm() < 1e-12, "k={k}: {c}");
        }
    }

    #[test]
    fn matches_dense_oracle_on_random_input() {
        for seed in 0..5 {
            let f = random_field(vec![2, 16], seed);
            let s = rfft_axis(&f, 0).unwrap();
            let o = dft_oracle(&f, 0).unwrap();
            assert!(max_rel_diff(s.coeffs(), o.coeffs()) < 1e-6);
            let f32f: Field<f32> = f.cast();
            let s32 = rfft_axis(&f32f, 0).unwrap();
            let s32: Vec<Complex<f64>> = s32.coeffs().iter().map(|c| Complex::new(c.re as f64, c.im as f64)).collect();
            assert!(max_rel_diff(&s32, o.coeffs()) < 1e-6);
        }
        let f = random_field(vec![3, 6, 10], 9);
        for axis in 0..2 {
            let s = rfft_axis(&f, axis).unwrap();
            let o = dft_oracle(&f, axis).unwrap();
            assert_eq!(s.shape(), o.shape());
            assert!(max_rel_diff(s.coeffs(), o.coeffs()) < 1e-6);
        }
    }

    #[test]
    fn axis_out_of_range_is_usage_error() {
        let f = Field::<f32>::zeros(vec![1, 8]).unwrap();
        assert!(matches!(rfft_axis(&f, 1), Err(Error::Usage(_))));
        assert!(matches!(dft_oracle(&f, 3), Err(Error::Usage(_))));
        let tiny = Field::<f32>::zeros(vec![1, 1]).unwrap();
        assert!(matches!(rfft_axis(&tiny, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn inverse_examples() {
        let s = AxisSpectrum::new(
            vec![Complex::new(8.0, 0.0), Complex::new(0.0, 0.0), Complex::new(0.0, 0.0), Complex::new(0.0, 0.0), Complex::new(0.0, 0.0)],
            vec![1, 5],
            0,
            8,
        )
        .unwrap();
        let f = irfft_axis(&s).unwrap();
        assert!(f.data().iter().all(|v: &f64| (v - 1.0).abs() < 1e-12));

        let mut c = vec![Complex::new(0.0, 0.0); 9];
        c[1] = Complex::new(0.0, -8.0);
        let s = AxisSpectrum::new(c, vec![1, 9], 0, 16).unwrap();
        let f = irfft_axis(&s).unwrap();
        for (j, v) in f.data().iter().enumerate() {
            assert!((v - (2.0 * PI * j as f64 / 16.0).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn odd_length_round_trip() {
        let f = random_field(vec![2, 7, 9], 3);
        for axis in 0..2 {
            let back = irfft_axis(&rfft_axis(&f, axis).unwrap()).unwrap();
            for (a, b) in back.data().iter().zip(f.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn truncation_examples() {
        let sin1 = Field::<f64>::from_fn(vec![1, 16], |_, x| (2.0 * PI * x[0]).sin()).unwrap();
        let s = rfft_axis(&sin1, 0).unwrap();
        let t = truncate_modes(&s, 2).unwrap();
        assert!(t.coeffs().iter().zip(s.coeffs()).all(|(a, b)| (a - b).norm() < 1e-12));
        assert!(t.coeffs()[2..].iter().all(|c| *c == Complex::new(0.0, 0.0)));

        let sin5 = Field::<f64>::from_fn(vec![1, 16], |_, x| (2.0 * PI * 5.0 * x[0]).sin()).unwrap();
        let t = truncate_modes(&rfft_axis(&sin5, 0).unwrap(), 3).unwrap();
        assert!(t.coeffs().iter().all(|c| c.norm() < 1e-10));

        let noise = random_field(vec![1, 16], 11);
        let s = rfft_axis(&noise, 0).unwrap();
        assert_eq!(truncate_modes(&s, 9).unwrap(), s);

        assert!(matches!(truncate_modes(&s, 0), Err(Error::Usage(_))));
        assert!(matches!(truncate_modes(&s, 10), Err(Error::Usage(_))));
    }

    #[test]
    fn transform_leaves_other_axis_alone() {
        // constant along axis 1: every axis-1 slice of the axis-0 spectrum is identical
        let f = Field::<f64>::from_fn(vec![1, 8, 6], |_, x| (2.0 * PI * x[0]).cos() + x[0] * x[0]).unwrap();
        let s = rfft_axis(&f, 0).unwrap();
        let (nf, inner) = (5, 6);
        for k in 0..nf {
            let first = s.coeffs()[k * inner];
            for i in 1..inner {
                assert!((s.coeffs()[k * inner + i] - first).norm() < 1e-12);
            }
        }
    }

    fn full_spectrum_energy(s: &AxisSpectrum<f64>) -> f64 {
        let n = s.source_len();
        s.coeffs()
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let k = s.freq_of(idx);
                let weight = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
                weight * c.norm_sqr()
            })
            .sum()
    }

    proptest! {
        #[test]
        fn parseval_and_round_trip(
            vals in prop::collection::vec(-10.0f64..10.0, 2..40),
        ) {
            let n = vals.len();
            let f = Field::new(vec![1, n], vals).unwrap();
            let s = rfft_axis(&f, 0).unwrap();
            let energy: f64 = f.data().iter().map(|v| v * v).sum();
            let spec_energy = full_spectrum_energy(&s) / n as f64;
            prop_assert!((energy - spec_energy).abs() <= 1e-5 * energy.max(1e-12));
            prop_assert!(s.coeffs()[0].im.abs() < 1e-9);
            if n % 2 == 0 {
                prop_assert!(s.coeffs()[n / 2].im.abs() < 1e-9);
            }
            let back = irfft_axis(&s).unwrap();
            let err: f64 = back.data().iter().zip(f.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-12 * f.norm().max(1.0));
        }

        #[test]
        fn truncation_is_a_projection(
            vals in prop::collection::vec(-1.0f64..1.0, 16),
            modes in 1usize..=9,
        ) {
            let f = Field::new(vec![1, 16], vals).unwrap();
            let s = rfft_axis(&f, 0).unwrap();
            let t = truncate_modes(&s, modes).unwrap();
            prop_assert_eq!(&truncate_modes(&t, modes).unwrap(), &t);
            prop_assert!(t.norm() <= s.norm() + 1e-12);
        }

        #[test]
        fn oracle_is_linear(
            a in prop::collection::vec(-1.0f64..1.0, 12),
            b in prop::collection::vec(-1.0f64..1.0, 12),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
            let fa = dft_oracle(&Field::new(vec![1, 12], a).unwrap(), 0).unwrap();
            let fb = dft_oracle(&Field::new(vec![1, 12], b).unwrap(), 0).unwrap();
            let fm = dft_oracle(&Field::new(vec![1, 12], mix).unwrap(), 0).unwrap();
            for ((m, x), y) in fm.coeffs().iter().zip(fa.coeffs()).zip(fb.coeffs()) {
                prop_assert!((m - (x * alpha + y * beta)).norm() < 1e-9);
            }
        }
    }
}
