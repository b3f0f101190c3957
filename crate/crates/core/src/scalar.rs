//! Scalar types the timing formulas can be evaluated in.
//!
//! The analysis proper runs on integer picoseconds, but every formula is
//! written against [`TimeScalar`] so the same code can produce nanosecond
//! floats for reporting or exact rationals for cross-checking.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num};

/// A non-negative time quantity supporting the ceiling division needed by
/// the preemption count `⌈(R + J) / T⌉`.
pub trait TimeScalar: Num + FromPrimitive + Copy + PartialOrd + Debug + Send + Sync {
    /// `⌈self / rhs⌉`, expressed in `Self`.
    fn ceil_div(self, rhs: Self) -> Self;

    /// Converts a count or a picosecond value. Panics if it does not fit.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("value not representable in the chosen scalar")
    }
}

macro_rules! impl_int_scalar {
    ($($t:ty),*) => {$(
        impl TimeScalar for $t {
            #[inline]
            fn ceil_div(self, rhs: Self) -> Self {
                let q = self / rhs;
                if self % rhs != 0 { q + 1 } else { q }
            }
        }
    )*};
}

macro_rules! impl_float_scalar {
    ($($t:ty),*) => {$(
        impl TimeScalar for $t {
            #[inline]
            fn ceil_div(self, rhs: Self) -> Self {
                (self / rhs).ceil()
            }
        }
    )*};
}

impl_int_scalar!(u32, u64, u128, i64, i128);
impl_float_scalar!(f32, f64);

impl TimeScalar for Ratio<i64> {
    fn ceil_div(self, rhs: Self) -> Self {
        (self / rhs).ceil()
    }
}

impl TimeScalar for Ratio<i128> {
    fn ceil_div(self, rhs: Self) -> Self {
        (self / rhs).ceil()
    }
}
