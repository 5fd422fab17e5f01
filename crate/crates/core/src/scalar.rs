//! Scalar abstraction: every solver in this crate is generic over a real
//! floating-point type so the same code runs in `f32` or `f64`.

use std::fmt;

use num_traits::{Float, FromPrimitive};
use rand::distributions::uniform::SampleUniform;

/// Real scalar type the market solvers operate on.
///
/// `f32` and `f64` both qualify. Infinite capacities are represented by the
/// IEEE infinity of the scalar type, so `Float::infinity()` is load-bearing.
pub trait Real:
    Float + FromPrimitive + SampleUniform + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Lift an `f64` literal into the scalar type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable in scalar type")
    }

    fn two() -> Self {
        Self::of(2.0)
    }

    fn half() -> Self {
        Self::of(0.5)
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + SampleUniform + fmt::Debug + fmt::Display + Send + Sync + 'static
{
}
