//! Scalar abstraction over the floating-point type used by all numeric code.
//!
//! Everything downstream (targets, natural parameters, weights, metrics) is
//! generic over [`Scalar`]; `f64` is the default choice and the one exercised
//! by the test suite. `f32` works at reduced precision.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar: f32 or f64.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Display
    + LowerExp
    + Debug
    + Send
    + Sync
    + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum<Self>
        + Display
        + LowerExp
        + Debug
        + Send
        + Sync
        + 'static
{
}

/// Shorthand conversion from `f64` literals and intermediate values.
#[inline]
pub fn s<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("f64 value representable in scalar type")
}

/// Shorthand conversion from counts and sizes.
#[inline]
pub fn s_usize<S: Scalar>(n: usize) -> S {
    S::from_usize(n).expect("usize value representable in scalar type")
}

/// Numerically stable log(Σ exp(v)) over a slice.
///
/// Two passes: max, then sum of shifted exponentials. Empty input yields -inf.
pub fn log_sum_exp<S: Scalar>(values: &[S]) -> S {
    let mut max = S::neg_infinity();
    for &v in values {
        if v > max {
            max = v;
        }
    }
    if max == S::neg_infinity() {
        return S::neg_infinity();
    }
    let mut sum = S::zero();
    for &v in values {
        sum += (v - max).exp();
    }
    max + sum.ln()
}

/// In-place stable softmax: `values[i] <- exp(values[i] - max) / Σ`.
pub fn softmax_in_place<S: Scalar>(values: &mut [S]) {
    let mut max = S::neg_infinity();
    for &v in values.iter() {
        if v > max {
            max = v;
        }
    }
    let mut sum = S::zero();
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
}
