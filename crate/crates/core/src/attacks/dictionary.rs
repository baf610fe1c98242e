//! Precomputed-dictionary sizing over the 256-bit challenge space.
//!
//! All arithmetic is exact; floats appear only when rendering.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

pub const CHALLENGE_BITS: u32 = 256;
pub const BYTES_PER_PETABYTE: u64 = 1_000_000_000_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DictionaryError {
    #[error("probability {0} outside [0, 1]")]
    Probability(String),
    #[error("entry count {0} outside [0, 2^256]")]
    Entries(String),
}

pub fn challenge_space() -> BigInt {
    BigInt::one() << CHALLENGE_BITS
}

/// Entries needed to hold the live challenge with probability `c`:
/// `ceil(c * 2^256)`.
pub fn dictionary_size_for_probability(c: &BigRational) -> Result<BigInt, DictionaryError> {
    if c.is_negative() || c > &BigRational::one() {
        return Err(DictionaryError::Probability(c.to_string()));
    }
    let x = c * BigRational::from_integer(challenge_space());
    Ok(x.ceil().to_integer())
}

/// Probability that a dictionary of `x` entries holds the live challenge.
pub fn dictionary_probability(x: &BigInt) -> Result<BigRational, DictionaryError> {
    if x.is_negative() || x > &challenge_space() {
        return Err(DictionaryError::Entries(x.to_string()));
    }
    Ok(BigRational::new(x.clone(), challenge_space()))
}

/// Bits to store `x` pairs of 256-bit challenge and response.
pub fn pair_storage_bits(x: &BigInt) -> BigInt {
    x * BigInt::from(2 * CHALLENGE_BITS)
}

/// The full-dictionary figure as published: `2 * 2^256` bits.
pub fn full_dictionary_bits_published() -> BigInt {
    challenge_space() * 2
}

pub fn bits_to_petabytes(bits: &BigInt) -> BigRational {
    BigRational::new(bits.clone(), BigInt::from(8u64 * BYTES_PER_PETABYTE))
}

/// `r` as `(mantissa, exponent)` with `digits` significant digits, rounded
/// half up: `mantissa * 10^(exponent - digits + 1)` approximates `r`.
pub fn scientific(r: &BigRational, digits: u32) -> (BigInt, i64) {
    assert!(digits >= 1);
    if r.is_zero() {
        return (BigInt::zero(), 0);
    }
    let ten = BigInt::from(10);
    let mut exp: i64 = 0;
    let mut v = r.abs();
    while v >= BigRational::from_integer(ten.clone()) {
        v /= BigRational::from_integer(ten.clone());
        exp += 1;
    }
    while v < BigRational::one() {
        v *= BigRational::from_integer(ten.clone());
        exp -= 1;
    }
    let scaled = v * BigRational::from_integer(num_traits::pow(ten.clone(), digits as usize - 1));
    let (q, rem) = scaled.numer().div_rem(scaled.denom());
    let mut m = q;
    if rem * 2 >= *scaled.denom() {
        m += 1;
    }
    if m == num_traits::pow(ten, digits as usize) {
        m /= 10;
        exp += 1;
    }
    (m, exp)
}

/// Renders like `1.16e75`.
pub fn render_scientific(r: &BigRational, digits: u32) -> String {
    let (m, e) = scientific(r, digits);
    let s = m.to_string();
    if s.len() == 1 {
        format!("{s}e{e}")
    } else {
        format!("{}.{}e{e}", &s[..1], &s[1..])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DictionaryReport {
    pub probability: String,
    pub entries: String,
    pub entries_sci: String,
    pub pair_storage_petabytes_sci: String,
    pub full_dictionary_petabytes_sci: String,
}

pub fn dictionary_report(c: &BigRational) -> Result<DictionaryReport, DictionaryError> {
    let x = dictionary_size_for_probability(c)?;
    Ok(DictionaryReport {
        probability: c.to_string(),
        entries: x.to_string(),
        entries_sci: render_scientific(&BigRational::from_integer(x.clone()), 3),
        pair_storage_petabytes_sci: render_scientific(&bits_to_petabytes(&pair_storage_bits(&x)), 2),
        full_dictionary_petabytes_sci: render_scientific(&bits_to_petabytes(&full_dictionary_bits_published()), 2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn one_percent_needs_about_1_16e75_entries() {
        let x = dictionary_size_for_probability(&ratio(1, 100)).unwrap();
        // 2^256 / 100 rounded up
        let (q, r) = challenge_space().div_rem(&BigInt::from(100));
        assert_eq!(x, if r.is_zero() { q } else { q + 1 });
        assert_eq!(render_scientific(&BigRational::from_integer(x), 3), "1.16e75");
    }

    #[test]
    fn certainty_needs_the_whole_space() {
        assert_eq!(
            dictionary_size_for_probability(&ratio(1, 1)).unwrap(),
            challenge_space()
        );
        assert_eq!(dictionary_size_for_probability(&ratio(0, 1)).unwrap(), BigInt::zero());
    }

    #[test]
    fn single_entry_probability() {
        assert_eq!(
            dictionary_probability(&BigInt::one()).unwrap(),
            BigRational::new(BigInt::one(), challenge_space())
        );
    }

    #[test]
    fn full_dictionary_is_2_9e61_petabytes() {
        let pb = bits_to_petabytes(&full_dictionary_bits_published());
        assert_eq!(render_scientific(&pb, 2), "2.9e61");
    }

    #[test]
    fn out_of_range_inputs() {
        assert!(dictionary_size_for_probability(&ratio(-1, 2)).is_err());
        assert!(dictionary_size_for_probability(&ratio(3, 2)).is_err());
        assert!(dictionary_probability(&(challenge_space() + 1)).is_err());
        assert!(dictionary_probability(&BigInt::from(-1)).is_err());
    }

    #[test]
    fn scientific_rounding() {
        assert_eq!(render_scientific(&ratio(995, 1), 2), "1.0e3");
        assert_eq!(render_scientific(&ratio(1, 8), 2), "1.3e-1");
        assert_eq!(render_scientific(&ratio(7, 1), 1), "7e0");
    }
}
