//! Scalar abstraction for the kernel and loss math.
//!
//! The feature samplers, exact kernels and losses are generic over [`Real`]
//! so they can be instantiated at `f32` or `f64`. The training pipeline and
//! the model file format are pinned to `f64` (see the aliases at the crate
//! root).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the kernel/loss math.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    const PI: Self;
    const TWO: Self;

    /// Lossless-enough conversion from `f64` literals and stream draws.
    fn cast(v: f64) -> Self;
}

impl Real for f64 {
    const PI: Self = std::f64::consts::PI;
    const TWO: Self = 2.0;

    #[inline]
    fn cast(v: f64) -> Self {
        v
    }
}

impl Real for f32 {
    const PI: Self = std::f32::consts::PI;
    const TWO: Self = 2.0;

    #[inline]
    fn cast(v: f64) -> Self {
        v as f32
    }
}
