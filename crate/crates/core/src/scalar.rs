//! Scalar abstraction for the numeric core.
//!
//! All geometry and loss math is generic over [`Real`], a floating-point
//! scalar (`f32` or `f64`). Concrete aliases for the common types live at
//! the crate root.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + 'static
{
    /// Lift an `f64` constant into the scalar type.
    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("constant representable in scalar type")
    }

    #[inline]
    fn two() -> Self {
        Self::c(2.0)
    }

    #[inline]
    fn half() -> Self {
        Self::c(0.5)
    }
}

impl<T> Real for T where
    T: Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + 'static
{
}
