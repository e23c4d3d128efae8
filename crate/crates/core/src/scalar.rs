//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Real scalar the engine runs on: `f64` by default, `f32` for fast smoke runs.
pub trait Real:
    Float + FromPrimitive + NumAssign + Sum + Default + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Lossless-enough conversion from an `f64` literal.
    fn lit(v: f64) -> Self;

    /// Widening conversion used at reporting boundaries.
    fn as_f64(self) -> f64;

    /// Conversion from a count.
    fn from_count(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Real for f64 {
    #[inline]
    fn lit(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}
