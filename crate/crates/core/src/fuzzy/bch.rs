//! Narrow-sense primitive binary BCH codes of length `2^m - 1`, `m <= 7`.
//!
//! Words are `u128` with bit `i` holding the coefficient of `x^i`.
//! Encoding is systematic (message in the high `k` positions); decoding
//! uses syndromes, Berlekamp-Massey and a Chien search.

use thiserror::Error;

use super::gf::Gf;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BchError {
    #[error("no primitive BCH code with m = {m}, t = {t}")]
    InvalidParams { m: u32, t: usize },
    #[error("more errors than the code can correct")]
    Uncorrectable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BchCode {
    gf: Gf,
    n: usize,
    k: usize,
    t: usize,
    generator: u128,
}

fn degree(p: u128) -> usize {
    127 - p.leading_zeros() as usize
}

fn clmul(a: u128, b: u128) -> u128 {
    let mut out = 0u128;
    for i in 0..128 {
        if b >> i & 1 == 1 {
            out ^= a << i;
        }
    }
    out
}

fn poly_mod(mut a: u128, g: u128) -> u128 {
    let dg = degree(g);
    while a != 0 && degree(a) >= dg {
        a ^= g << (degree(a) - dg);
    }
    a
}

impl BchCode {
    /// Code of length `2^m - 1` correcting `t` errors.
    pub fn new(m: u32, t: usize) -> Result<Self, BchError> {
        let gf = Gf::new(m).ok_or(BchError::InvalidParams { m, t })?;
        let n = gf.order();
        if t == 0 || 2 * t >= n {
            return Err(BchError::InvalidParams { m, t });
        }
        // LCM of the minimal polynomials of alpha^1 .. alpha^2t: one
        // factor per cyclotomic coset.
        let mut covered = vec![false; n];
        let mut generator: u128 = 1;
        for i in 1..=2 * t {
            if covered[i % n] {
                continue;
            }
            let mut coset = Vec::new();
            let mut e = i % n;
            while !covered[e] {
                covered[e] = true;
                coset.push(e);
                e = e * 2 % n;
            }
            // prod (x - alpha^e) over GF(2^m); coefficients land in {0, 1}
            let mut poly: Vec<u8> = vec![1];
            for &e in &coset {
                let root = gf.pow_alpha(e);
                let mut next = vec![0u8; poly.len() + 1];
                for (d, &c) in poly.iter().enumerate() {
                    next[d + 1] ^= c;
                    next[d] ^= gf.mul(c, root);
                }
                poly = next;
            }
            let mut min_poly = 0u128;
            for (d, &c) in poly.iter().enumerate() {
                debug_assert!(c <= 1);
                if c == 1 {
                    min_poly |= 1 << d;
                }
            }
            generator = clmul(generator, min_poly);
        }
        let k = n - degree(generator);
        if k == 0 {
            return Err(BchError::InvalidParams { m, t });
        }
        Ok(Self { gf, n, k, t, generator })
    }

    /// BCH(15, 5, 3).
    pub fn bch_15_5_3() -> Self {
        Self::new(4, 3).expect("valid code")
    }

    /// BCH(127, 64, 10).
    pub fn bch_127_64_10() -> Self {
        Self::new(7, 10).expect("valid code")
    }

    pub fn m(&self) -> u32 {
        self.gf.m()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn generator(&self) -> u128 {
        self.generator
    }

    /// Systematic encoding of the low `k` bits of `message`.
    pub fn encode(&self, message: u128) -> u128 {
        let msg = if self.k == 128 {
            message
        } else {
            message & ((1u128 << self.k) - 1)
        };
        let shifted = msg << (self.n - self.k);
        shifted ^ poly_mod(shifted, self.generator)
    }

    pub fn is_codeword(&self, word: u128) -> bool {
        poly_mod(word, self.generator) == 0
    }

    fn syndromes(&self, word: u128) -> Vec<u8> {
        (1..=2 * self.t)
            .map(|j| {
                let mut s = 0u8;
                let mut w = word;
                while w != 0 {
                    let i = w.trailing_zeros() as usize;
                    s ^= self.gf.pow_alpha(i * j);
                    w &= w - 1;
                }
                s
            })
            .collect()
    }

    /// Nearest codeword within distance `t`, and the number of corrected
    /// bit positions.
    pub fn decode(&self, word: u128) -> Result<(u128, usize), BchError> {
        let gf = &self.gf;
        let s = self.syndromes(word);
        if s.iter().all(|&x| x == 0) {
            return Ok((word, 0));
        }

        // Berlekamp-Massey
        let mut c: Vec<u8> = vec![1];
        let mut b: Vec<u8> = vec![1];
        let mut l = 0usize;
        let mut shift = 1usize;
        let mut last = 1u8;
        for r in 0..s.len() {
            let mut d = s[r];
            for i in 1..=l.min(c.len() - 1) {
                d ^= gf.mul(c[i], s[r - i]);
            }
            if d == 0 {
                shift += 1;
                continue;
            }
            let coef = gf.div(d, last);
            let prev = c.clone();
            if c.len() < b.len() + shift {
                c.resize(b.len() + shift, 0);
            }
            for (i, &bi) in b.iter().enumerate() {
                c[i + shift] ^= gf.mul(coef, bi);
            }
            if 2 * l <= r {
                l = r + 1 - l;
                b = prev;
                last = d;
                shift = 1;
            } else {
                shift += 1;
            }
        }
        if l > self.t {
            return Err(BchError::Uncorrectable);
        }

        // Chien search: position i is in error iff lambda(alpha^-i) = 0.
        let mut fixed = word;
        let mut roots = 0;
        for i in 0..self.n {
            let inv = (self.n - i) % self.n;
            let mut acc = 0u8;
            for (d, &cd) in c.iter().enumerate() {
                acc ^= gf.mul(cd, gf.pow_alpha(inv * d));
            }
            if acc == 0 {
                fixed ^= 1 << i;
                roots += 1;
            }
        }
        if roots != l || !self.is_codeword(fixed) {
            return Err(BchError::Uncorrectable);
        }
        Ok((fixed, roots))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{seq::index::sample, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_parameters() {
        let c = BchCode::bch_15_5_3();
        assert_eq!((c.n(), c.k(), c.t()), (15, 5, 3));
        // x^10 + x^8 + x^5 + x^4 + x^2 + x + 1
        assert_eq!(c.generator(), 0b101_0011_0111);
        let c = BchCode::bch_127_64_10();
        assert_eq!((c.n(), c.k(), c.t()), (127, 64, 10));
        assert_eq!(BchCode::new(4, 2).unwrap().k(), 7);
        assert_eq!(BchCode::new(4, 1).unwrap().k(), 11);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert_eq!(BchCode::new(9, 2), Err(BchError::InvalidParams { m: 9, t: 2 }));
        assert!(BchCode::new(4, 0).is_err());
        assert!(BchCode::new(4, 8).is_err());
    }

    #[test]
    fn small_code_corrects_every_pattern_up_to_t() {
        let c = BchCode::bch_15_5_3();
        for msg in 0..32u128 {
            let cw = c.encode(msg);
            assert!(c.is_codeword(cw));
            for e1 in 0..15 {
                for e2 in e1..15 {
                    for e3 in e2..15 {
                        // e1 == e2 collapses weights, covering 0..=3
                        let err = (1u128 << e1) ^ (1u128 << e2) ^ (1u128 << e3);
                        let (got, _) = c.decode(cw ^ err).unwrap();
                        assert_eq!(got, cw, "msg {msg} err {err:015b}");
                    }
                }
            }
            assert_eq!(c.decode(cw), Ok((cw, 0)));
        }
    }

    #[test]
    fn small_code_minimum_distance_is_seven() {
        let c = BchCode::bch_15_5_3();
        let min = (1..32u128).map(|m| c.encode(m).count_ones()).min().unwrap();
        assert_eq!(min, 7);
    }

    #[test]
    fn default_code_random_patterns() {
        let c = BchCode::bch_127_64_10();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let cw = c.encode(rng.gen());
            let w = rng.gen_range(0..=10);
            let mut err = 0u128;
            for p in sample(&mut rng, 127, w) {
                err |= 1 << p;
            }
            let (got, fixed) = c.decode(cw ^ err).unwrap();
            assert_eq!(got, cw);
            assert_eq!(fixed, w);
        }
    }

    #[test]
    fn default_code_beyond_capacity_never_returns_the_sent_word() {
        let c = BchCode::bch_127_64_10();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for start in 0..117 {
            let cw = c.encode(rng.gen());
            let err = ((1u128 << 11) - 1) << start;
            assert_ne!(c.decode(cw ^ err).map(|x| x.0), Ok(cw));
        }
    }
}
