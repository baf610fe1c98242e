//! Scalar abstraction for gate-delay arithmetic.
//!
//! The delay network only needs ordered addition and a handful of
//! conversions, so it is written against [`DelayScalar`] and instantiated
//! for `f32` and `f64`. The concrete aliases live at the crate root.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type usable as a per-gate delay (picoseconds).
pub trait DelayScalar: Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + 'static {
    /// Tag written into model export files.
    const TAG: u8;
    /// Encoded width in bytes.
    const BYTES: usize;

    fn write_le(self, out: &mut Vec<u8>);

    /// Decode from exactly [`Self::BYTES`] little-endian bytes.
    fn read_le(bytes: &[u8]) -> Self;

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::zero)
    }
}

impl DelayScalar for f32 {
    const TAG: u8 = 0x20;
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_bits().to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut b = [0u8; 4];
        b.copy_from_slice(&bytes[..4]);
        f32::from_bits(u32::from_le_bytes(b))
    }
}

impl DelayScalar for f64 {
    const TAG: u8 = 0x40;
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_bits().to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut b = [0u8; 8];
        b.copy_from_slice(&bytes[..8]);
        f64::from_bits(u64::from_le_bytes(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip<T: DelayScalar>(v: T) -> T {
        let mut out = Vec::new();
        v.write_le(&mut out);
        assert_eq!(out.len(), T::BYTES);
        T::read_le(&out)
    }

    #[test]
    fn le_roundtrip_is_bit_exact() {
        assert_eq!(roundtrip(103.25_f64).to_bits(), 103.25_f64.to_bits());
        assert_eq!(roundtrip(-0.0_f32).to_bits(), (-0.0_f32).to_bits());
        assert_ne!(f32::TAG, f64::TAG);
    }
}
