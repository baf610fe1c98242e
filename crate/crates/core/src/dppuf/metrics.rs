//! Avalanche and uniqueness statistics.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{DppufError, DppufInstance, Scratch};
use crate::bits::{BitString, Challenge};
use crate::scalar::DelayScalar;

/// Histogram bins over the per-vector switched fraction.
pub const SAC_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SacReport {
    pub width: usize,
    pub vectors: usize,
    pub seed: u64,
    pub mean: f64,
    /// `histogram[b]` counts vectors whose switched fraction lies in
    /// `[b / 20, (b + 1) / 20)`; a fraction of exactly 1 lands in the last bin.
    pub histogram: Vec<u64>,
}

fn random_challenge(width: usize, rng: &mut ChaCha8Rng) -> Challenge {
    let mut bytes = vec![0u8; width.div_ceil(8)];
    rng.fill_bytes(&mut bytes);
    BitString::from_leading_bits(width, &bytes)
}

/// Mean probability that an output bit switches when one uniformly chosen
/// input bit of a random challenge flips.
pub fn sac_metric<T: DelayScalar>(inst: &DppufInstance<T>, num_vectors: usize, seed: u64) -> Result<f64, DppufError> {
    Ok(sac_report(inst, num_vectors, seed)?.mean)
}

pub fn sac_report<T: DelayScalar>(
    inst: &DppufInstance<T>,
    num_vectors: usize,
    seed: u64,
) -> Result<SacReport, DppufError> {
    if num_vectors < 100 {
        return Err(DppufError::TooFewVectors(num_vectors));
    }
    let w = inst.width();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch = Scratch::default();
    let mut histogram = vec![0u64; SAC_BINS];
    let mut switched = 0u64;
    for _ in 0..num_vectors {
        let c = random_challenge(w, &mut rng);
        let mut c2 = c.clone();
        c2.flip(rng.gen_range(0..w));
        let a = inst.evaluate_with(&c, &mut scratch)?;
        let b = inst.evaluate_with(&c2, &mut scratch)?;
        let d = a.hamming(&b).expect("same width");
        switched += d as u64;
        histogram[(d * SAC_BINS / w).min(SAC_BINS - 1)] += 1;
    }
    Ok(SacReport {
        width: w,
        vectors: num_vectors,
        seed,
        mean: switched as f64 / (num_vectors as f64 * w as f64),
        histogram,
    })
}

/// SAC over every (challenge, flipped bit) pair. Only for small widths.
pub fn exhaustive_sac<T: DelayScalar>(inst: &DppufInstance<T>) -> Result<f64, DppufError> {
    let w = inst.width();
    if w > 16 {
        return Err(DppufError::InvalidWidth(w));
    }
    let table: Vec<BitString> = (0..1u64 << w)
        .map(|x| inst.evaluate(&BitString::from_u64(w, x)))
        .collect::<Result<_, _>>()?;
    let mut switched = 0u64;
    for x in 0..1usize << w {
        for bit in 0..w {
            switched += table[x].hamming(&table[x ^ (1 << bit)]).expect("same width") as u64;
        }
    }
    Ok(switched as f64 / ((1u64 << w) as f64 * w as f64 * w as f64))
}

/// Mean fractional Hamming distance between two devices' responses over
/// `challenges` shared random challenges.
pub fn inter_instance_distance<T: DelayScalar>(
    a: &DppufInstance<T>,
    b: &DppufInstance<T>,
    challenges: usize,
    seed: u64,
) -> Result<f64, DppufError> {
    if a.width() != b.width() {
        return Err(DppufError::WidthMismatch {
            expected: a.width(),
            got: b.width(),
        });
    }
    let w = a.width();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch = Scratch::default();
    let mut total = 0u64;
    for _ in 0..challenges.max(1) {
        let c = random_challenge(w, &mut rng);
        let ra = a.evaluate_with(&c, &mut scratch)?;
        let rb = b.evaluate_with(&c, &mut scratch)?;
        total += ra.hamming(&rb).expect("same width") as u64;
    }
    Ok(total as f64 / (challenges.max(1) as f64 * w as f64))
}
