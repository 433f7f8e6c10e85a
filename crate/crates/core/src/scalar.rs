//! Numeric traits shared by the simulation and metric code.
//!
//! Anything that only needs field arithmetic and ordering (profits, rates,
//! KS distances, order bias) is written against [`Scalar`], which is
//! implemented for `f32`, `f64` and exact rationals. Quantities that need
//! logarithms or square roots (entropy, t statistics, correlations) require
//! [`Real`].

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Ordered field element that can be built from counts and read back as `f64`.
pub trait Scalar: Num + Clone + PartialOrd + FromPrimitive + ToPrimitive + Debug {
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits in scalar")
    }

    fn from_int(v: i64) -> Self {
        Self::from_i64(v).expect("integer fits in scalar")
    }

    fn abs_diff(&self, other: &Self) -> Self {
        if *self >= *other {
            self.clone() - other.clone()
        } else {
            other.clone() - self.clone()
        }
    }

    fn approx_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where T: Num + Clone + PartialOrd + FromPrimitive + ToPrimitive + Debug {}

/// Floating-point scalar.
pub trait Real: Scalar + Float {}

impl<T> Real for T where T: Scalar + Float {}
