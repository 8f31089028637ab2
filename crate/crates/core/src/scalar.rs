//! Floating-point element types.
//!
//! Training runs in `f32`; gradient checks and oracles use `f64`. Everything
//! numeric in the crate is generic over [`Scalar`].

use std::collections::HashMap;
use std::fmt::{Debug, Display};
use std::ops::{AddAssign, MulAssign, SubAssign};
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use realfft::{ComplexToReal, FftNum, RealFftPlanner, RealToComplex};

type PlanPair<T> = (Arc<dyn RealToComplex<T>>, Arc<dyn ComplexToReal<T>>);

pub trait Scalar:
    FftNum
    + Float
    + AddAssign
    + SubAssign
    + MulAssign
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Byte width used in the on-disk formats.
    const WIDTH: u32;

    fn from_f64_lossy(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Cached real-to-complex / complex-to-real plans for length `n`.
    fn real_fft_plans(n: usize) -> PlanPair<Self>;

    /// `C <- alpha * A B + beta * C` on strided row/column layouts.
    ///
    /// # Safety
    /// Every index `i*rs + j*cs` reachable for the stated shapes must be in
    /// bounds of the corresponding pointer.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty, $width:expr, $gemm:path) => {
        impl Scalar for $t {
            const WIDTH: u32 = $width;

            fn from_f64_lossy(v: f64) -> Self {
                v as $t
            }

            fn as_f64(self) -> f64 {
                self as f64
            }

            fn real_fft_plans(n: usize) -> PlanPair<Self> {
                static CACHE: OnceLock<Mutex<(RealFftPlanner<$t>, HashMap<usize, PlanPair<$t>>)>> =
                    OnceLock::new();
                let cache = CACHE.get_or_init(|| Mutex::new((RealFftPlanner::new(), HashMap::new())));
                let mut guard = cache.lock().expect("fft plan cache poisoned");
                let (planner, plans) = &mut *guard;
                if let Some(p) = plans.get(&n) {
                    return p.clone();
                }
                let pair = (planner.plan_fft_forward(n), planner.plan_fft_inverse(n));
                plans.insert(n, pair.clone());
                pair
            }

            unsafe fn gemm_raw(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: *const Self,
                rsa: isize,
                csa: isize,
                b: *const Self,
                rsb: isize,
                csb: isize,
                beta: Self,
                c: *mut Self,
                rsc: isize,
                csc: isize,
            ) {
                $gemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
            }

            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn read_le(bytes: &[u8]) -> Self {
                let mut buf = [0u8; $width];
                buf.copy_from_slice(&bytes[..$width]);
                <$t>::from_le_bytes(buf)
            }
        }
    };
}

impl_scalar!(f32, 4, matrixmultiply::sgemm);
impl_scalar!(f64, 8, matrixmultiply::dgemm);

/// Shorthand for literal constants in generic code.
#[inline]
pub(crate) fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64_lossy(v)
}
