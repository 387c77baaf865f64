//! Scalar abstraction for the math kernels.

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar the physics, dynamics, and neural kernels are
/// generic over. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`.
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 convertible to Scalar")
    }

    /// Lossy conversion to `f64`.
    fn real(self) -> f64 {
        self.to_f64().expect("Scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
