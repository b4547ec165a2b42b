//! Element types the engine can run in.

use core::fmt::Debug;
use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Floating point element of a [`Tensor`](crate::Tensor).
///
/// Implemented for `f64` (the default) and `f32`. Bit-level access goes
/// through `u64` so the fault injector can treat both widths uniformly.
pub trait Scalar:
    Copy
    + Default
    + Debug
    + PartialEq
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + Send
    + Sync
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    const EPSILON: Self;
    /// Smallest positive normal value.
    const MIN_POSITIVE: Self;
    /// Stored mantissa bits (52 for f64, 23 for f32).
    const MANTISSA_BITS: u32;
    /// Total width in bits.
    const BITS: u32;
    /// Bytes per element in serialized form.
    const BYTES: usize;
    const NAME: &'static str;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn to_bits_u64(self) -> u64;
    fn from_bits_u64(bits: u64) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;

    #[inline]
    fn abs(self) -> Self {
        if self < Self::ZERO {
            -self
        } else {
            self
        }
    }

    #[inline]
    fn is_nan(self) -> bool {
        self.partial_cmp(&self).is_none()
    }

    #[inline]
    fn is_finite(self) -> bool {
        let bits = self.to_bits_u64();
        let exp_mask = ((1u64 << (Self::BITS - 1 - Self::MANTISSA_BITS)) - 1) << Self::MANTISSA_BITS;
        bits & exp_mask != exp_mask
    }

    /// XOR-flips bit `bit` (0 = least significant mantissa bit).
    #[inline]
    fn flip_bit(self, bit: u32) -> Self {
        debug_assert!(bit < Self::BITS);
        Self::from_bits_u64(self.to_bits_u64() ^ (1u64 << bit))
    }

    fn write_le(self, out: &mut alloc::vec::Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    const EPSILON: Self = f64::EPSILON;
    const MIN_POSITIVE: Self = f64::MIN_POSITIVE;
    const MANTISSA_BITS: u32 = 52;
    const BITS: u32 = 64;
    const BYTES: usize = 8;
    const NAME: &'static str = "f64";

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn to_bits_u64(self) -> u64 {
        self.to_bits()
    }
    #[inline]
    fn from_bits_u64(bits: u64) -> Self {
        f64::from_bits(bits)
    }
    #[inline]
    fn exp(self) -> Self {
        libm::exp(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    fn write_le(self, out: &mut alloc::vec::Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        let mut b = [0u8; 8];
        b.copy_from_slice(&bytes[..8]);
        f64::from_le_bytes(b)
    }
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    const EPSILON: Self = f32::EPSILON;
    const MIN_POSITIVE: Self = f32::MIN_POSITIVE;
    const MANTISSA_BITS: u32 = 23;
    const BITS: u32 = 32;
    const BYTES: usize = 4;
    const NAME: &'static str = "f32";

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn to_bits_u64(self) -> u64 {
        self.to_bits() as u64
    }
    #[inline]
    fn from_bits_u64(bits: u64) -> Self {
        f32::from_bits(bits as u32)
    }
    #[inline]
    fn exp(self) -> Self {
        libm::expf(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrtf(self)
    }
    fn write_le(self, out: &mut alloc::vec::Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        let mut b = [0u8; 4];
        b.copy_from_slice(&bytes[..4]);
        f32::from_le_bytes(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flip_top_mantissa_bit_of_one() {
        assert_eq!(1.0f64.flip_bit(51), 1.5);
        assert_eq!(1.0f32.flip_bit(22), 1.5);
    }

    #[test]
    fn finiteness() {
        assert!(1.0f64.is_finite());
        assert!(!f64::INFINITY.is_finite());
        assert!(!f64::NAN.is_finite());
        assert!(!f32::NEG_INFINITY.is_finite());
        assert!(f32::MIN_POSITIVE.is_finite());
    }
}
