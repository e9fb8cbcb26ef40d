use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar for the numeric kernels: `f32` or `f64`.
///
/// The combinatorial substrate (groups, balls, walks) is exact integer
/// arithmetic; everything metric or probabilistic is generic over this trait.
pub trait Scalar:
    Float
    + FromPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Conversion from `f64`, for constants and RNG draws.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + Sum
        + AddAssign
        + SubAssign
        + MulAssign
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
