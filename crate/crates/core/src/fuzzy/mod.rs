//! Code-offset fuzzy extractor over tiled BCH blocks.
//!
//! A response of `W` bits is zero-padded to `blocks * n` bits. Enrollment
//! draws one random codeword per block and publishes `response ^ codewords`
//! as helper data; reproduction XORs a noisy response back in, decodes each
//! block to the nearest codeword and hashes the codewords into a key.

mod bch;
mod gf;

use rand::{seq::index::sample, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bits::{BitString, Response};
use crate::crypto::{self, CipherKey, CryptoProfile, KEY_BYTES};

pub use bch::{BchCode, BchError};
pub use gf::Gf;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FuzzyError {
    #[error("helper data was made for BCH({n},{k},{t}), extractor uses BCH({en},{ek},{et})")]
    CodeMismatch {
        n: usize,
        k: usize,
        t: usize,
        en: usize,
        ek: usize,
        et: usize,
    },
    #[error("response has {got} bits, expected {expected}")]
    Width { expected: usize, got: usize },
    #[error("block {block} could not be decoded")]
    Decode { block: usize },
    #[error("cannot flip {flips} bits of a {width}-bit response")]
    TooManyFlips { flips: usize, width: usize },
    #[error("malformed helper data: {0}")]
    Malformed(&'static str),
}

/// Public enrollment output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HelperData {
    pub n: usize,
    pub k: usize,
    pub t: usize,
    pub response_bits: usize,
    /// `padded response ^ codewords`, `blocks * n` bits.
    pub code_offset: BitString,
}

impl HelperData {
    pub fn blocks(&self) -> usize {
        self.code_offset.len() / self.n
    }

    /// `n u8 | k u8 | t u8 | response_bits u16 | offset bits u16 | offset`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![self.n as u8, self.k as u8, self.t as u8];
        out.extend_from_slice(&(self.response_bits as u16).to_le_bytes());
        out.extend_from_slice(&(self.code_offset.len() as u16).to_le_bytes());
        out.extend_from_slice(self.code_offset.as_bytes());
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, FuzzyError> {
        if b.len() < 7 {
            return Err(FuzzyError::Malformed("truncated header"));
        }
        let (n, k, t) = (b[0] as usize, b[1] as usize, b[2] as usize);
        let response_bits = u16::from_le_bytes([b[3], b[4]]) as usize;
        let bits = u16::from_le_bytes([b[5], b[6]]) as usize;
        if n == 0 || t == 0 || k == 0 || k > n {
            return Err(FuzzyError::Malformed("code parameters"));
        }
        if !bits.is_multiple_of(n) || bits < response_bits || bits - response_bits >= n {
            return Err(FuzzyError::Malformed("offset length"));
        }
        let code_offset = BitString::from_bytes(bits, &b[7..]).map_err(|_| FuzzyError::Malformed("offset bytes"))?;
        Ok(Self {
            n,
            k,
            t,
            response_bits,
            code_offset,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuzzyExtractor {
    code: BchCode,
    profile: CryptoProfile,
}

impl Default for FuzzyExtractor {
    fn default() -> Self {
        Self::new(BchCode::bch_127_64_10(), CryptoProfile::Lightweight)
    }
}

fn block_word(bits: &BitString, block: usize, n: usize) -> u128 {
    let mut w = 0u128;
    for j in 0..n {
        let i = block * n + j;
        if i < bits.len() && bits.get(i) {
            w |= 1 << j;
        }
    }
    w
}

fn put_block(bits: &mut BitString, block: usize, n: usize, word: u128) {
    for j in 0..n {
        bits.set(block * n + j, word >> j & 1 == 1);
    }
}

impl FuzzyExtractor {
    pub fn new(code: BchCode, profile: CryptoProfile) -> Self {
        Self { code, profile }
    }

    pub fn code(&self) -> &BchCode {
        &self.code
    }

    pub fn blocks_for(&self, width: usize) -> usize {
        width.div_ceil(self.code.n())
    }

    /// Enrolls `response`. The codeword draw is seeded by `seed`.
    pub fn generate(&self, response: &Response, seed: u64) -> Result<(CipherKey, HelperData), FuzzyError> {
        if response.is_empty() {
            return Err(FuzzyError::Width { expected: 1, got: 0 });
        }
        let n = self.code.n();
        let blocks = self.blocks_for(response.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut codewords = BitString::zeros(blocks * n);
        let mut offset = BitString::zeros(blocks * n);
        for b in 0..blocks {
            let cw = self.code.encode(rng.gen());
            put_block(&mut codewords, b, n, cw);
            put_block(&mut offset, b, n, cw ^ block_word(response, b, n));
        }
        let helper = HelperData {
            n,
            k: self.code.k(),
            t: self.code.t(),
            response_bits: response.len(),
            code_offset: offset,
        };
        Ok((self.key_from_codewords(&codewords), helper))
    }

    /// Recovers the enrolled key from a noisy re-measurement.
    pub fn reproduce(&self, noisy: &Response, helper: &HelperData) -> Result<CipherKey, FuzzyError> {
        self.check_helper(helper)?;
        if noisy.len() != helper.response_bits {
            return Err(FuzzyError::Width {
                expected: helper.response_bits,
                got: noisy.len(),
            });
        }
        let n = self.code.n();
        let mut codewords = BitString::zeros(helper.code_offset.len());
        for b in 0..helper.blocks() {
            let word = block_word(&helper.code_offset, b, n) ^ block_word(noisy, b, n);
            let (cw, _) = self.code.decode(word).map_err(|_| FuzzyError::Decode { block: b })?;
            put_block(&mut codewords, b, n, cw);
        }
        Ok(self.key_from_codewords(&codewords))
    }

    /// True iff `candidate` lies within `t` errors of `reference` in every
    /// block, i.e. `candidate ^ reference` decodes to the zero codeword.
    /// Within `t` of zero the decoder always returns zero and beyond `t`
    /// it never does, so a per-block weight check is the same test.
    pub fn within_capacity(&self, candidate: &Response, reference: &Response) -> bool {
        if candidate.len() != reference.len() {
            return false;
        }
        let n = self.code.n();
        let diff = match candidate.xor(reference) {
            Ok(d) => d,
            Err(_) => return false,
        };
        (0..self.blocks_for(diff.len())).all(|b| (block_word(&diff, b, n).count_ones() as usize) <= self.code.t())
    }

    fn check_helper(&self, h: &HelperData) -> Result<(), FuzzyError> {
        let c = &self.code;
        if (h.n, h.k, h.t) != (c.n(), c.k(), c.t()) {
            return Err(FuzzyError::CodeMismatch {
                n: h.n,
                k: h.k,
                t: h.t,
                en: c.n(),
                ek: c.k(),
                et: c.t(),
            });
        }
        if h.code_offset.len() != self.blocks_for(h.response_bits) * c.n() {
            return Err(FuzzyError::Malformed("offset length"));
        }
        Ok(())
    }

    fn key_from_codewords(&self, codewords: &BitString) -> CipherKey {
        let d = crypto::hash(self.profile, codewords.as_bytes());
        let mut k = [0u8; KEY_BYTES];
        k.copy_from_slice(&d[..KEY_BYTES]);
        CipherKey(k)
    }
}

/// Flips exactly `flips` distinct positions chosen by `seed`.
pub fn apply_noise(response: &Response, flips: usize, seed: u64) -> Result<Response, FuzzyError> {
    let width = response.len();
    if flips > width {
        return Err(FuzzyError::TooManyFlips { flips, width });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = response.clone();
    for i in sample(&mut rng, width, flips) {
        out.flip(i);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_response(width: usize, seed: u64) -> Response {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bools: Vec<bool> = (0..width).map(|_| rng.gen()).collect();
        BitString::from_bools(&bools)
    }

    #[test]
    fn noiseless_round_trip() {
        let fe = FuzzyExtractor::default();
        let r = random_response(256, 1);
        let (key, helper) = fe.generate(&r, 7).unwrap();
        assert_eq!(helper.blocks(), 3);
        assert_eq!(helper.code_offset.len(), 381);
        assert_eq!(fe.reproduce(&r, &helper).unwrap(), key);
    }

    #[test]
    fn fresh_codewords_change_the_helper() {
        let fe = FuzzyExtractor::default();
        let r = random_response(256, 2);
        let (k1, h1) = fe.generate(&r, 1).unwrap();
        let (k2, h2) = fe.generate(&r, 2).unwrap();
        assert_ne!(h1.code_offset, h2.code_offset);
        assert_ne!(k1, k2);
    }

    #[test]
    fn zero_helper_on_zero_response_hashes_zero_codeword() {
        let fe = FuzzyExtractor::new(BchCode::bch_15_5_3(), CryptoProfile::Lightweight);
        let helper = HelperData {
            n: 15,
            k: 5,
            t: 3,
            response_bits: 30,
            code_offset: BitString::zeros(30),
        };
        let key = fe.reproduce(&BitString::zeros(30), &helper).unwrap();
        let d = crypto::hash(CryptoProfile::Lightweight, BitString::zeros(30).as_bytes());
        assert_eq!(&key.0[..], &d[..16]);
    }

    #[test]
    fn small_code_exhaustive_error_patterns() {
        let fe = FuzzyExtractor::new(BchCode::bch_15_5_3(), CryptoProfile::Midweight);
        let r = random_response(15, 3);
        let (key, helper) = fe.generate(&r, 5).unwrap();
        let mut checked = 0;
        for mask in 0u32..1 << 15 {
            let w = mask.count_ones() as usize;
            let mut noisy = r.clone();
            for i in 0..15 {
                if mask >> i & 1 == 1 {
                    noisy.flip(i);
                }
            }
            let got = fe.reproduce(&noisy, &helper);
            if w <= 3 {
                assert_eq!(got, Ok(key), "mask {mask:015b}");
                checked += 1;
            } else if w == 4 && mask.trailing_zeros() + 4 + mask.leading_zeros() == 32 {
                // clustered t+1
                assert_ne!(got, Ok(key), "mask {mask:015b}");
            }
        }
        assert_eq!(checked, 1 + 15 + 105 + 455);
    }

    #[test]
    fn unrelated_responses_fail() {
        let fe = FuzzyExtractor::default();
        let r = random_response(256, 4);
        let (key, helper) = fe.generate(&r, 9).unwrap();
        let wrong = (0..1000)
            .filter(|i| fe.reproduce(&random_response(256, 100 + i), &helper) != Ok(key))
            .count();
        assert!(wrong >= 990, "{wrong}");
    }

    #[test]
    fn helper_bits_look_uniform() {
        let fe = FuzzyExtractor::default();
        let mut ones = vec![0u32; 381];
        for i in 0..1000 {
            let (_, h) = fe.generate(&random_response(256, 5000 + i), 77 + i).unwrap();
            for (j, b) in h.code_offset.iter().enumerate() {
                ones[j] += b as u32;
            }
        }
        for (j, &c) in ones.iter().enumerate() {
            let p = c as f64 / 1000.0;
            assert!((p - 0.5).abs() <= 0.05 + 0.02, "bit {j}: {p}");
        }
    }

    #[test]
    fn helper_serialization_round_trip() {
        let fe = FuzzyExtractor::default();
        let (_, h) = fe.generate(&random_response(256, 6), 1).unwrap();
        let bytes = h.to_bytes();
        assert_eq!(bytes.len(), 7 + 48);
        assert_eq!(HelperData::from_bytes(&bytes).unwrap(), h);
        assert!(HelperData::from_bytes(&bytes[..10]).is_err());
    }

    #[test]
    fn helper_from_other_code_is_rejected() {
        let big = FuzzyExtractor::default();
        let small = FuzzyExtractor::new(BchCode::bch_15_5_3(), CryptoProfile::Lightweight);
        let r = random_response(256, 7);
        let (_, h) = big.generate(&r, 1).unwrap();
        assert!(matches!(small.reproduce(&r, &h), Err(FuzzyError::CodeMismatch { .. })));
        assert!(matches!(
            big.reproduce(&BitString::zeros(128), &h),
            Err(FuzzyError::Width { .. })
        ));
    }

    #[test]
    fn within_capacity_matches_decoder() {
        let fe = FuzzyExtractor::new(BchCode::bch_15_5_3(), CryptoProfile::Lightweight);
        let reference = random_response(30, 8);
        for mask in 0u32..1 << 15 {
            let mut cand = reference.clone();
            for i in 0..15 {
                if mask >> i & 1 == 1 {
                    cand.flip(i + 15);
                }
            }
            let diff = cand.xor(&reference).unwrap();
            let decodes_to_zero = fe.code().decode(block_word(&diff, 1, 15)).map(|x| x.0) == Ok(0);
            assert_eq!(fe.within_capacity(&cand, &reference), decodes_to_zero);
        }
    }

    #[test]
    fn noise_edge_cases() {
        let r = random_response(64, 9);
        assert_eq!(apply_noise(&r, 0, 1).unwrap(), r);
        assert_eq!(apply_noise(&r, 64, 1).unwrap(), r.not());
        assert_eq!(
            apply_noise(&r, 65, 1),
            Err(FuzzyError::TooManyFlips { flips: 65, width: 64 })
        );
        assert_eq!(apply_noise(&r, 5, 3).unwrap(), apply_noise(&r, 5, 3).unwrap());
    }

    proptest! {
        #[test]
        fn noise_flips_exactly(seed in any::<u64>(), flips in 0usize..=96, rs in any::<u64>()) {
            let r = random_response(96, rs);
            let n = apply_noise(&r, flips, seed).unwrap();
            prop_assert_eq!(n.hamming(&r).unwrap(), flips);
        }
    }
}
