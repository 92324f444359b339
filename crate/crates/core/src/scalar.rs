//! Scalar abstraction shared by every module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the numerics are written against.
///
/// Implemented for `f32` and `f64`. Everything in the crate is generic over
/// it; the `*64` aliases at the crate root fix it to `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only if the target type cannot
    /// represent finite values, which neither `f32` nor `f64` does.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_usize_(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn to_f64_(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Below this length the pairwise tree switches to a left-to-right loop.
const PAIRWISE_LEAF: usize = 32;

/// Sum in a fixed pairwise-tree order.
///
/// The order depends only on the slice length, so the result is
/// bit-identical no matter how the values were produced (in particular, no
/// matter how many rayon workers filled the slice).
pub fn pairwise_sum<T: Real>(values: &[T]) -> T {
    if values.len() <= PAIRWISE_LEAF {
        let mut acc = T::zero();
        for &v in values {
            acc = acc + v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Maximum of absolute values; zero for an empty slice.
pub fn max_abs<T: Real>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// Closed interval used to carry quadrature brackets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> std::ops::Add for Interval<T> {
    type Output = Self;

    fn add(self, other: Self) -> Self {
        Interval { lo: self.lo + other.lo, hi: self.hi + other.hi }
    }
}

impl<T: Real> Interval<T> {
    pub fn point(v: T) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn new(a: T, b: T) -> Self {
        Interval { lo: a.min(b), hi: a.max(b) }
    }

    pub fn midpoint(&self) -> T {
        (self.lo + self.hi) * T::lit(0.5)
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    pub fn contains(&self, v: T) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn scale(self, s: T) -> Self {
        Interval::new(self.lo * s, self.hi * s)
    }
}
