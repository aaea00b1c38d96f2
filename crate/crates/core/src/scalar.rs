//! Floating-point abstraction shared by the estimator and expectation code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used by the estimators: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    fn of_u64(v: u64) -> Self {
        Self::from_u64(v).expect("u64 is representable as a float")
    }

    fn of_u128(v: u128) -> Self {
        Self::from_u128(v).expect("u128 is representable as a float")
    }

    fn of_f64(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable as a float")
    }

    fn lit(v: f64) -> Self {
        Self::of_f64(v)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
