//! Floating-point abstraction shared by the numeric modules.
//!
//! Wavelet analysis, chain training, decoding and the similarity measures are
//! written against [`Scalar`] so the same code runs in `f32` or `f64`.
//! Dataset handling and the classifiers stay in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64`; every finite `f64` maps to some value.
    fn of(x: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

/// `ln N(w; 0, var)`.
/// Tolerance for checking that `terms` values sum to one: `base`, widened to
/// the rounding error of the scalar type when that is larger.
pub fn sum_tol<T: Scalar>(base: f64, terms: usize) -> T {
    T::of(base).max(T::epsilon() * T::of(4.0 * (terms + 1) as f64))
}

#[inline]
pub fn log_normal_zero_mean<T: Scalar>(w: T, var: T) -> T {
    let two = T::of(2.0);
    -(w * w) / (two * var) - T::of(0.5) * (two * T::PI() * var).ln()
}

/// `N(w; 0, var)`.
#[inline]
pub fn normal_zero_mean<T: Scalar>(w: T, var: T) -> T {
    log_normal_zero_mean(w, var).exp()
}

/// `ln Σ exp(x_i)`, `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<T>().ln()
}

/// Natural log that maps `0` to `-inf` without a NaN detour.
#[inline]
pub(crate) fn ln_prob<T: Scalar>(p: T) -> T {
    if p <= T::zero() {
        T::neg_infinity()
    } else {
        p.ln()
    }
}
