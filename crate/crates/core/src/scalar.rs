//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra as na;
use num_traits as nt;

/// Floating point scalar usable by the calibration routines (`f32` or `f64`).
pub trait Real:
    na::RealField + Copy + nt::FloatConst + nt::FromPrimitive + nt::ToPrimitive + Send + Sync
{
    /// Converts an `f64` literal into `Self`.
    fn lit(x: f64) -> Self;

    /// Lossy conversion to `f64`, used for reporting.
    fn as_f64(self) -> f64;

    /// Machine epsilon.
    fn eps() -> Self;

    fn nan() -> Self;
}

macro_rules! impl_real {
    ($f:ty) => {
        impl Real for $f {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $f
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            #[inline]
            fn eps() -> Self {
                <$f>::EPSILON
            }

            #[inline]
            fn nan() -> Self {
                <$f>::NAN
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);
