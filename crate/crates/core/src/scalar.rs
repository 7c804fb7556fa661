//! Real and complex scalars behind a single trait so that the diffusion (real
//! symmetric) and Helmholtz (complex sesquilinear) pipelines share one code path.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub use num_complex::Complex64;

/// Scalar field tag of operators and vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    Real,
    Complex,
}

pub trait Scalar:
    faer::traits::ComplexField
    + Copy
    + Debug
    + Default
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + 'static
{
    const FIELD: Field;
    const ZERO: Self;
    const ONE: Self;

    fn of_real(x: f64) -> Self;
    /// Builds a scalar from real and imaginary parts; real scalars drop `im`.
    fn from_parts(re: f64, im: f64) -> Self;
    fn conjugate(self) -> Self;
    fn modulus(self) -> f64;
    fn modulus_sqr(self) -> f64;
    fn re_part(self) -> f64;
    fn im_part(self) -> f64;

    fn scaled(self, r: f64) -> Self {
        self * Self::of_real(r)
    }

    fn finite(self) -> bool {
        self.re_part().is_finite() && self.im_part().is_finite()
    }
}

impl Scalar for f64 {
    const FIELD: Field = Field::Real;
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    #[inline]
    fn of_real(x: f64) -> Self {
        x
    }
    #[inline]
    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }
    #[inline]
    fn conjugate(self) -> Self {
        self
    }
    #[inline]
    fn modulus(self) -> f64 {
        self.abs()
    }
    #[inline]
    fn modulus_sqr(self) -> f64 {
        self * self
    }
    #[inline]
    fn re_part(self) -> f64 {
        self
    }
    #[inline]
    fn im_part(self) -> f64 {
        0.0
    }
}

impl Scalar for Complex64 {
    const FIELD: Field = Field::Complex;
    const ZERO: Self = Complex64::new(0.0, 0.0);
    const ONE: Self = Complex64::new(1.0, 0.0);

    #[inline]
    fn of_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    #[inline]
    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }
    #[inline]
    fn conjugate(self) -> Self {
        Complex64::new(self.re, -self.im)
    }
    #[inline]
    fn modulus(self) -> f64 {
        self.re.hypot(self.im)
    }
    #[inline]
    fn modulus_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }
    #[inline]
    fn re_part(self) -> f64 {
        self.re
    }
    #[inline]
    fn im_part(self) -> f64 {
        self.im
    }
}

/// Hermitian inner product `x^H y`.
pub fn dot<S: Scalar>(x: &[S], y: &[S]) -> S {
    x.iter().zip(y).map(|(a, b)| a.conjugate() * *b).sum()
}

pub fn norm2<S: Scalar>(x: &[S]) -> f64 {
    x.iter().map(|v| v.modulus_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs<S: Scalar>(x: &[S]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.modulus()))
}
