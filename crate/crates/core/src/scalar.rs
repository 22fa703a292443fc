//! Scalar abstraction shared by every numerical module.
//!
//! All of the math is written against [`Scalar`], which is implemented for
//! `f32` and `f64`. Linear algebra goes through nalgebra, conversions through
//! num-traits.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating point type usable by the kernels, the GP and the bounds.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Distance from 1 to the next representable value.
    fn machine_epsilon() -> Self;

    /// Converts an `f64` literal into this type.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 literal representable")
    }

    /// Converts a count into this type.
    #[inline]
    fn from_count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable")
    }

    /// Lossy conversion to `f64` for reporting and export.
    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// `|self|`, spelled out to avoid the `Signed`/`ComplexField` ambiguity.
    #[inline]
    fn magnitude(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }
}

impl Scalar for f32 {
    fn machine_epsilon() -> Self {
        f32::EPSILON
    }
}

impl Scalar for f64 {
    fn machine_epsilon() -> Self {
        f64::EPSILON
    }
}

/// Euclidean norm of a slice.
pub fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

/// Euclidean distance between two points of equal length.
pub fn distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}

pub(crate) fn all_finite<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// `n` evenly spaced values from `lo` to `hi` inclusive (`n == 1` gives the midpoint).
pub fn linspace<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![(lo + hi) * T::lit(0.5)],
        _ => {
            let step = (hi - lo) / T::from_count(n - 1);
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + step * T::from_count(i) })
                .collect()
        }
    }
}
