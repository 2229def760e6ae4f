//! Scalar abstraction for the deterministic matrix and basis code.
//!
//! Everything that is plain linear algebra or closed-form evaluation is written
//! against [`Scalar`], so it runs in `f32` as well as `f64`. The Monte Carlo
//! engines and samplers are `f64` only.

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Real floating-point scalar: `f32` or `f64`.
pub trait Scalar: RealField + Copy + ToPrimitive {
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
