//! Numeric traits the rest of the crate is generic over.
//!
//! Geometry, graphs, community detection and the classifier run on
//! [`Scalar`] (binary floating point). The assignment solver and the
//! coreference metrics only need ordered field arithmetic, so they are
//! generic over [`Cost`] / [`Measure`], which are also implemented for exact
//! rationals.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, Neg, SubAssign};

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Entry type of an assignment problem.
///
/// Only addition, subtraction and comparison are used, so integer and
/// rational entries are solved exactly.
pub trait Cost: Copy + PartialOrd + Num + Neg<Output = Self> + Debug {
    fn is_finite_cost(&self) -> bool {
        true
    }
}

impl Cost for f32 {
    fn is_finite_cost(&self) -> bool {
        self.is_finite()
    }
}

impl Cost for f64 {
    fn is_finite_cost(&self) -> bool {
        self.is_finite()
    }
}

impl Cost for i32 {}
impl Cost for i64 {}
impl Cost for i128 {}
impl Cost for Ratio<i64> {}
impl Cost for Ratio<i128> {}

/// Value type of a coreference score: a [`Cost`] that can represent counts.
pub trait Measure: Cost {
    fn from_count(n: usize) -> Self;
    fn to_f64_lossy(self) -> f64;
}

impl Measure for f32 {
    fn from_count(n: usize) -> Self {
        n as f32
    }
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Measure for f64 {
    fn from_count(n: usize) -> Self {
        n as f64
    }
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

impl Measure for Ratio<i64> {
    fn from_count(n: usize) -> Self {
        Ratio::from_integer(n as i64)
    }
    fn to_f64_lossy(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

impl Measure for Ratio<i128> {
    fn from_count(n: usize) -> Self {
        Ratio::from_integer(n as i128)
    }
    fn to_f64_lossy(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}
