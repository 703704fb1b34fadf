//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All algorithms are written against [`Real`], which is implemented for
//! `f32` and `f64`. Complex quantities are `num_complex::Complex<T>`.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable by the alignment, pairing and delay code.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Machine epsilon of the underlying floating-point format.
    fn machine_epsilon() -> Self;
}

impl Real for f32 {
    fn machine_epsilon() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn machine_epsilon() -> Self {
        f64::EPSILON
    }
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Lossy conversion to `f64`, used for reporting.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// `|z|` without requiring `num_traits::Float`.
#[inline]
pub fn modulus<T: Real>(z: Complex<T>) -> T {
    z.re.hypot(z.im)
}

#[inline]
pub fn modulus_sqr<T: Real>(z: Complex<T>) -> T {
    z.re * z.re + z.im * z.im
}

#[inline]
pub fn argument<T: Real>(z: Complex<T>) -> T {
    z.im.atan2(z.re)
}

/// `r·e^{iθ}`.
#[inline]
pub fn polar<T: Real>(r: T, theta: T) -> Complex<T> {
    Complex::new(r * theta.cos(), r * theta.sin())
}

/// Relative closeness `|a−b| ≤ tol·max(|a|,|b|)`.
#[inline]
pub fn rel_close<T: Real>(a: Complex<T>, b: Complex<T>, tol: T) -> bool {
    modulus(a - b) <= tol * modulus(a).max(modulus(b))
}
