//! Reverse pass through the fixed FFNO graph.
//!
//! The spectral pieces use the real-linear adjoints of the half-spectrum
//! transforms: if `y = (1/S) c2r(Y)` then `dL/dY_k = (c_k/S) rfft(dL/dy)_k`
//! with `c_k = 1` at DC and Nyquist and 2 elsewhere, and if `Z = rfft(z)`
//! truncated to `M` modes then `dL/dz = c2r(dL/dZ_k / c_k)`.

use crate::linalg::{gemm, MatMut, MatRef};
use crate::model::{
    accumulate_inverse, mix_modes, truncated_rfft, Affine, FfnoConfig, FfnoParams, ForwardTape, LineGeometry,
    ModeBlock, SpectralWeights,
};
use crate::scalar::{lit, Scalar};

fn half_spectrum_weight(k: usize, n: usize) -> f64 {
    if k == 0 || (n % 2 == 0 && k == n / 2) {
        1.0
    } else {
        2.0
    }
}

fn scale_modes<T: Scalar>(block: &mut ModeBlock<T>, n: usize, f: impl Fn(f64) -> f64) {
    let stride = block.channels * block.lines;
    let modes = block.re.len() / stride.max(1);
    for k in 0..modes {
        let s = lit::<T>(f(half_spectrum_weight(k, n)));
        for v in block.re[k * stride..(k + 1) * stride].iter_mut().chain(&mut block.im[k * stride..(k + 1) * stride]) {
            *v = *v * s;
        }
    }
}

fn row_sums_into<T: Scalar>(g: &[T], rows: usize, n: usize, out: &mut [T]) {
    for (r, o) in out.iter_mut().enumerate().take(rows) {
        let mut acc = T::zero();
        for v in &g[r * n..(r + 1) * n] {
            acc = acc + *v;
        }
        *o = *o + acc;
    }
}

/// Accumulates `dW += g x^T`, `db += rowsum(g)` and returns `W^T g`.
fn affine_backward<T: Scalar>(affine: &Affine<T>, x: &[T], g: &[T], n: usize, grad: &mut Affine<T>) -> Vec<T> {
    gemm(
        T::one(),
        MatRef::row_major(g, affine.out_dim, n),
        MatRef::row_major(x, affine.in_dim, n).t(),
        T::one(),
        MatMut::row_major(&mut grad.weight, affine.out_dim, affine.in_dim),
    );
    row_sums_into(g, affine.out_dim, n, &mut grad.bias);
    let mut gx = vec![T::zero(); affine.in_dim * n];
    gemm(
        T::one(),
        MatRef::row_major(&affine.weight, affine.out_dim, affine.in_dim).t(),
        MatRef::row_major(g, affine.out_dim, n),
        T::zero(),
        MatMut::row_major(&mut gx, affine.in_dim, n),
    );
    gx
}

/// Backward of one axis of the spectral convolution. Adds into `grad_w` and `gz`.
#[allow(clippy::too_many_arguments)]
fn spectral_axis_backward<T: Scalar>(
    w: &SpectralWeights<T>,
    spectrum: &ModeBlock<T>,
    gk: &[T],
    shape: &[usize],
    axis: usize,
    grad_w: &mut SpectralWeights<T>,
    gz: &mut [T],
) {
    let geo = LineGeometry::new(shape, axis);
    let n = geo.n;
    let (h, m) = (w.width, w.modes);
    let mut gy = truncated_rfft(gk, geo, m);
    scale_modes(&mut gy, n, |c| c / n as f64);

    let one = T::one();
    for k in 0..m {
        let (gyr, gyi) = (gy.mode(k, false), gy.mode(k, true));
        let (zr, zi) = (spectrum.mode(k, false).t(), spectrum.mode(k, true).t());
        // dR = gY conj(Z)^T
        gemm(one, gyr, zr, one, MatMut::new(&mut grad_w.re, k, h, h, h * m, m));
        gemm(one, gyi, zi, one, MatMut::new(&mut grad_w.re, k, h, h, h * m, m));
        gemm(one, gyi, zr, one, MatMut::new(&mut grad_w.im, k, h, h, h * m, m));
        gemm(-one, gyr, zi, one, MatMut::new(&mut grad_w.im, k, h, h, h * m, m));
    }

    let mut gspec = mix_modes(w, &gy, true);
    scale_modes(&mut gspec, n, |c| 1.0 / c);
    accumulate_inverse(&gspec, m, geo, one, gz);
}

/// Full parameter gradient of `sum_n g_out[n] * pred[n]` for one forward tape.
/// `grad` is accumulated into.
pub(crate) fn backward<T: Scalar>(params: &FfnoParams<T>, tape: &ForwardTape<T>, g_out: &[T], grad: &mut FfnoParams<T>) {
    let cfg: &FfnoConfig = &params.config;
    let n = tape.input.grid_len();

    let mut gz = affine_backward(&params.proj_out, tape.last_latent.data(), g_out, n, &mut grad.proj_out);

    for (l, layer_tape) in tape.layers.iter().enumerate().rev() {
        let layer = &params.layers[l];
        let layer_grad = &mut grad.layers[l];

        let act: Vec<T> = layer_tape.pre_act.iter().map(|&v| cfg.activation.apply(v)).collect();
        let mut ga = affine_backward(&layer.ff2, &act, &gz, n, &mut layer_grad.ff2);
        for (g, a) in ga.iter_mut().zip(&layer_tape.pre_act) {
            *g = *g * cfg.activation.derivative(*a);
        }
        let gk = affine_backward(&layer.ff1, &layer_tape.conv, &ga, n, &mut layer_grad.ff1);

        // residual branch: gz already holds dL/dz_out
        let shape = layer_tape.input.shape();
        for axis in 0..cfg.dims {
            spectral_axis_backward(
                &layer.fourier[axis],
                &layer_tape.spectral.spectra[axis],
                &gk,
                shape,
                axis,
                &mut layer_grad.fourier[axis],
                &mut gz,
            );
        }
    }

    affine_backward(&params.proj_in, tape.input.data(), &gz, n, &mut grad.proj_in);
}
