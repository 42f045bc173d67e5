//! Scalar abstraction shared by the float kernels.
//!
//! Pixel storage stays 8-bit; everything that does arithmetic on pixels,
//! depths, homographies or histograms is generic over [`Real`] so it can run
//! in `f32` or `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal, which always succeeds for IEEE floats.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// 8-bit sample to normalized `[0, 1]`.
#[inline]
pub fn unit<T: Real>(v: u8) -> T {
    T::lit(v as f64) / T::lit(255.0)
}

/// Normalized value to an 8-bit sample: clamp to `[0,1]`, scale by 255 and
/// round half up.
///
/// Products such as `0.7 * 255` land a hair below `.5` in binary floating
/// point, so a slack of a few ulps at the 255 scale is treated as a tie.
#[inline]
pub fn quantize<T: Real>(v: T) -> u8 {
    let scaled = v.max(T::zero()).min(T::one()) * T::lit(255.0);
    let slack = T::epsilon() * T::lit(1024.0);
    let q = (scaled + T::lit(0.5) + slack).floor();
    q.to_f64_lossy().clamp(0.0, 255.0) as u8
}

/// Same rounding rule for values already on the 0..=255 scale.
#[inline]
pub fn quantize_255<T: Real>(v: T) -> u8 {
    quantize(v / T::lit(255.0))
}
