use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real number type the search and arithmetic code is written against.
///
/// Implemented for `f32` and `f64`. Files and the wire protocol always carry
/// 32-bit values; `f64` is the working precision used by the CLI.
pub trait Scalar:
    'static
    + Copy
    + Send
    + Sync
    + Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Default
    + Sum
    + Debug
    + Display
    + LowerExp
    + Serialize
    + DeserializeOwned
{
    fn lit(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Maps a raw 64-bit random word onto `[0, 1)` at this type's mantissa width.
    fn unit_from_bits(bits: u64) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn lit(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline]
    fn unit_from_bits(bits: u64) -> Self {
        (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl Scalar for f32 {
    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn unit_from_bits(bits: u64) -> Self {
        (bits >> 40) as f32 * (1.0 / (1u32 << 24) as f32)
    }
}

/// `-1`, `0` or `+1`; zero maps to zero (unlike `Float::signum`).
#[inline]
pub fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}
