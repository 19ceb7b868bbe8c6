//! Scalar abstraction for the numeric kernels.
//!
//! Distance, loss, and retrieval code is generic over [`Scalar`] so the same
//! implementation runs on `f32` data straight from disk and on `f64` where
//! finite-difference checks need the extra headroom.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign};

/// Floating-point scalar accepted by the numeric kernels in this crate.
pub trait Scalar:
    Float + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    fn of_f64(v: f64) -> Self;
    fn of_f32(v: f32) -> Self;
    fn as_f64(self) -> f64;
    fn as_f32(self) -> f32;
}

impl Scalar for f32 {
    #[inline]
    fn of_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn of_f32(v: f32) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn as_f32(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    #[inline]
    fn of_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn of_f32(v: f32) -> Self {
        v as f64
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn as_f32(self) -> f32 {
        self as f32
    }
}
