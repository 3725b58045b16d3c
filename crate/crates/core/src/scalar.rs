//! Numeric abstraction shared by the transform, post-processing and metric
//! kernels.
//!
//! Oracles produce `f64` estimates, but the vector-level algorithms only need
//! field arithmetic and an order, so they are written once over [`Scalar`] and
//! run unchanged on `f32`, `f64` or exact rationals.

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// An ordered numeric field element.
pub trait Scalar: Num + FromPrimitive + ToPrimitive + Copy + PartialOrd + Debug + Send + Sync + 'static {
    fn of_usize(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("usize representable in scalar")
    }

    fn of_f64(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 representable in scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl<T> Scalar for T where T: Num + FromPrimitive + ToPrimitive + Copy + PartialOrd + Debug + Send + Sync + 'static {}
