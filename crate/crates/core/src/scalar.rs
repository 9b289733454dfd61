//! Floating-point abstraction shared by every numeric module.
//!
//! Image operations, the Fourier transforms, and the segmentation network are
//! written once over [`Scalar`] and instantiated for `f32` (training, the CLI)
//! and `f64` (finite-difference gradient checks, spectral property tests).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};
use rustfft::FftNum;

/// f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + FftNum + Default + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts a literal. Infallible for the two implementors.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);
