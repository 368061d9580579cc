//! Floating point abstraction used by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Real scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + rustfft::FftNum
    + 'static
{
    /// Converts an `f64` literal, rounding to the target precision.
    fn lit(x: f64) -> Self;

    fn from_index(k: usize) -> Self {
        Self::lit(k as f64)
    }

    fn as_f64(self) -> f64;

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// `ln Γ(x)` for `x > 0`.
    fn lgamma(self) -> Self;

    /// `Γ(x)`.
    fn tgamma(self) -> Self;
}

impl Real for f32 {
    fn lit(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
    fn lgamma(self) -> Self {
        libm::lgammaf(self)
    }
    fn tgamma(self) -> Self {
        libm::tgammaf(self)
    }
}

impl Real for f64 {
    fn lit(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
    fn lgamma(self) -> Self {
        libm::lgamma(self)
    }
    fn tgamma(self) -> Self {
        libm::tgamma(self)
    }
}

/// Euler Beta function through log-Gamma.
pub fn beta_fn<T: Real>(p: T, q: T) -> T {
    (p.lgamma() + q.lgamma() - (p + q).lgamma()).exp()
}
