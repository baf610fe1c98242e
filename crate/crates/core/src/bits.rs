//! Fixed-length bit strings, packed most-significant-bit first.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitError {
    #[error("expected {expected} bytes for {bits} bits, got {got}")]
    Length { bits: usize, expected: usize, got: usize },
    #[error("padding bits after bit {bits} are not zero")]
    Padding { bits: usize },
    #[error("bit length mismatch: {left} vs {right}")]
    Mismatch { left: usize, right: usize },
}

/// A bit string of exact length. Bit `i` lives in byte `i / 8` at mask
/// `0x80 >> (i % 8)`. Trailing padding bits are always zero so equality on
/// the byte buffer is equality on the bit string.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    len: usize,
    bytes: Vec<u8>,
}

/// Input to a PUF.
pub type Challenge = BitString;
/// Output of a PUF.
pub type Response = BitString;

impl BitString {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            bytes: vec![0; len.div_ceil(8)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut b = Self::zeros(len);
        b.bytes.iter_mut().for_each(|x| *x = 0xff);
        b.clear_padding();
        b
    }

    pub fn from_bytes(len: usize, bytes: &[u8]) -> Result<Self, BitError> {
        let expected = len.div_ceil(8);
        if bytes.len() != expected {
            return Err(BitError::Length {
                bits: len,
                expected,
                got: bytes.len(),
            });
        }
        let b = Self {
            len,
            bytes: bytes.to_vec(),
        };
        if !len.is_multiple_of(8) {
            let mask = 0xffu8 >> (len % 8);
            if b.bytes[expected - 1] & mask != 0 {
                return Err(BitError::Padding { bits: len });
            }
        }
        Ok(b)
    }

    /// Takes the leading `len` bits of `bytes`, which must be long enough.
    pub fn from_leading_bits(len: usize, bytes: &[u8]) -> Self {
        let n = len.div_ceil(8);
        assert!(bytes.len() >= n, "not enough bytes for {len} bits");
        let mut b = Self {
            len,
            bytes: bytes[..n].to_vec(),
        };
        b.clear_padding();
        b
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut b = Self::zeros(bits.len());
        for (i, &v) in bits.iter().enumerate() {
            if v {
                b.set(i, true);
            }
        }
        b
    }

    /// Low `len` bits of `value`, most significant first.
    pub fn from_u64(len: usize, value: u64) -> Self {
        assert!(len <= 64);
        let mut b = Self::zeros(len);
        for i in 0..len {
            if (value >> (len - 1 - i)) & 1 == 1 {
                b.set(i, true);
            }
        }
        b
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.bytes[i >> 3] & (0x80 >> (i & 7)) != 0
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        debug_assert!(i < self.len);
        let m = 0x80 >> (i & 7);
        if v {
            self.bytes[i >> 3] |= m;
        } else {
            self.bytes[i >> 3] &= !m;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.bytes[i >> 3] ^= 0x80 >> (i & 7);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn xor(&self, other: &Self) -> Result<Self, BitError> {
        if self.len != other.len {
            return Err(BitError::Mismatch {
                left: self.len,
                right: other.len,
            });
        }
        Ok(Self {
            len: self.len,
            bytes: self.bytes.iter().zip(&other.bytes).map(|(a, b)| a ^ b).collect(),
        })
    }

    pub fn hamming(&self, other: &Self) -> Result<usize, BitError> {
        if self.len != other.len {
            return Err(BitError::Mismatch {
                left: self.len,
                right: other.len,
            });
        }
        Ok(self
            .bytes
            .iter()
            .zip(&other.bytes)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    pub fn not(&self) -> Self {
        let mut b = Self {
            len: self.len,
            bytes: self.bytes.iter().map(|x| !x).collect(),
        };
        b.clear_padding();
        b
    }

    /// Copy of bits `[start, start + len)`; bits past the end read as zero.
    pub fn segment(&self, start: usize, len: usize) -> Self {
        let mut out = Self::zeros(len);
        for i in 0..len {
            let src = start + i;
            if src < self.len && self.get(src) {
                out.set(i, true);
            }
        }
        out
    }

    pub fn concat(parts: &[Self]) -> Self {
        let total = parts.iter().map(|p| p.len).sum();
        let mut out = Self::zeros(total);
        let mut at = 0;
        for p in parts {
            for i in 0..p.len {
                if p.get(i) {
                    out.set(at + i, true);
                }
            }
            at += p.len;
        }
        out
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }

    fn clear_padding(&mut self) {
        if !self.len.is_multiple_of(8) {
            let last = self.bytes.len() - 1;
            self.bytes[last] &= !(0xffu8 >> (self.len % 8));
        }
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({}b:{})", self.len, self.to_hex())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn msb_first_packing() {
        let b = BitString::from_u64(8, 0b1000_0001);
        assert_eq!(b.as_bytes(), &[0x81]);
        assert!(b.get(0) && b.get(7) && !b.get(1));
        let b = BitString::from_u64(4, 0b1010);
        assert_eq!(b.as_bytes(), &[0xa0]);
    }

    #[test]
    fn padding_must_be_zero() {
        assert_eq!(BitString::from_bytes(4, &[0xa1]), Err(BitError::Padding { bits: 4 }));
        assert!(BitString::from_bytes(4, &[0xa0]).is_ok());
        assert!(matches!(BitString::from_bytes(16, &[0]), Err(BitError::Length { .. })));
    }

    #[test]
    fn not_keeps_padding_clear() {
        let b = BitString::zeros(5).not();
        assert_eq!(b.as_bytes(), &[0xf8]);
        assert_eq!(b, BitString::ones(5));
    }

    proptest! {
        #[test]
        fn hamming_of_xor_is_popcount(a in proptest::collection::vec(any::<u8>(), 4), b in proptest::collection::vec(any::<u8>(), 4)) {
            let x = BitString::from_bytes(32, &a).unwrap();
            let y = BitString::from_bytes(32, &b).unwrap();
            prop_assert_eq!(x.hamming(&y).unwrap(), x.xor(&y).unwrap().count_ones());
        }

        #[test]
        fn segment_concat_roundtrip(a in proptest::collection::vec(any::<bool>(), 1..100), cut in 0usize..100) {
            let b = BitString::from_bools(&a);
            let cut = cut.min(a.len());
            let joined = BitString::concat(&[b.segment(0, cut), b.segment(cut, a.len() - cut)]);
            prop_assert_eq!(joined, b);
        }
    }
}
