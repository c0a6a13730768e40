//! Scalar abstraction: the numeric type every geometric and graph
//! computation is generic over.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the crate: `f32` or `f64`.
pub trait Real:
    nalgebra::RealField + FromPrimitive + ToPrimitive + Copy + Default + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Convert an `f64` constant into the working scalar type.
#[inline]
pub fn real<S: Real>(x: f64) -> S {
    S::from_f64(x).expect("f64 constant not representable in scalar type")
}

/// Convert a working scalar back to `f64` (for reporting and I/O).
#[inline]
pub fn to_f64<S: Real>(x: S) -> f64 {
    x.to_f64().expect("scalar not representable as f64")
}
