//! Element-to-challenge mapping and preimage search over a compact set.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BatchScratch, DppufError, DppufInstance, PpufModel, Scratch, LANES};
use crate::bits::{BitString, Challenge, Response};
use crate::channel::meter::{CostTable, WorkKind, WorkMeter};
use crate::crypto::{self, CryptoProfile};
use crate::fuzzy::{apply_noise, FuzzyExtractor};
use crate::scalar::DelayScalar;

/// Prefix hashed in front of every element before it becomes a challenge.
/// Keeps the challenge digest distinct from the element key derivation,
/// which hashes the bare element.
pub const CHALLENGE_DOMAIN: &[u8] = b"ppuf-fwupdate/challenge/v1";

/// Largest set size representable in the 20-bit wire field.
pub const MAX_SET_SIZE: u32 = (1 << 20) - 1;

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("no element of the set maps to the target response")]
    NotFound,
    #[error("set size must be in 1..=2^20-1 and must not overflow (s0 {start}, n {size})")]
    InvalidSet { start: u64, size: u32 },
    #[error(transparent)]
    Puf(#[from] DppufError),
}

/// The set `{s0, .., s0 + n - 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SetDescriptor {
    pub start: u64,
    pub size: u32,
}

impl SetDescriptor {
    pub fn new(start: u64, size: u32) -> Result<Self, SearchError> {
        let s = Self { start, size };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.size == 0 || self.size > MAX_SET_SIZE || self.start.checked_add(self.size as u64 - 1).is_none() {
            return Err(SearchError::InvalidSet {
                start: self.start,
                size: self.size,
            });
        }
        Ok(())
    }

    pub fn contains(&self, element: u64) -> bool {
        element >= self.start && element - self.start < self.size as u64
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> {
        let s = self.start;
        (0..self.size as u64).map(move |i| s + i)
    }
}

/// The digest of `element` fitted to `width` bits: longer digests keep
/// their leading bits, shorter ones are extended with
/// `hash(digest || be32(counter))` blocks, counter from 1.
pub fn challenge_for_element(profile: CryptoProfile, element: u64, width: usize) -> Challenge {
    let digest = crypto::hash_parts(profile, &[CHALLENGE_DOMAIN, &element.to_le_bytes()]);
    let mut buf = digest.clone();
    let mut counter = 1u32;
    while buf.len() * 8 < width {
        buf.extend(crypto::hash_parts(profile, &[&digest, &counter.to_be_bytes()]));
        counter += 1;
    }
    BitString::from_leading_bits(width, &buf)
}

/// Something that answers challenges: the hardware instance or its model.
pub trait ResponseOracle {
    type Scalar: DelayScalar;

    fn width(&self) -> usize;
    fn respond(&self, challenge: &Challenge, scratch: &mut Scratch<Self::Scalar>) -> Result<Response, DppufError>;
    /// Up to [`LANES`] challenges at once.
    fn respond_lanes(
        &self,
        challenges: &[Challenge],
        scratch: &mut BatchScratch<Self::Scalar>,
    ) -> Result<Vec<Response>, DppufError>;
    /// Meter bucket an evaluation is charged to.
    fn work_kind(&self) -> WorkKind;
    fn unit_cost(&self, costs: &CostTable) -> u64;
}

impl<T: DelayScalar> ResponseOracle for DppufInstance<T> {
    type Scalar = T;

    fn width(&self) -> usize {
        DppufInstance::width(self)
    }

    fn respond(&self, challenge: &Challenge, scratch: &mut Scratch<T>) -> Result<Response, DppufError> {
        self.evaluate_with(challenge, scratch)
    }

    fn respond_lanes(
        &self,
        challenges: &[Challenge],
        scratch: &mut BatchScratch<T>,
    ) -> Result<Vec<Response>, DppufError> {
        self.network().evaluate_lanes(challenges, scratch)
    }

    fn work_kind(&self) -> WorkKind {
        WorkKind::PpufHw
    }

    fn unit_cost(&self, costs: &CostTable) -> u64 {
        costs.ppuf_hw
    }
}

impl<T: DelayScalar> ResponseOracle for PpufModel<T> {
    type Scalar = T;

    fn width(&self) -> usize {
        PpufModel::width(self)
    }

    fn respond(&self, challenge: &Challenge, scratch: &mut Scratch<T>) -> Result<Response, DppufError> {
        self.network().evaluate(challenge, scratch)
    }

    fn respond_lanes(
        &self,
        challenges: &[Challenge],
        scratch: &mut BatchScratch<T>,
    ) -> Result<Vec<Response>, DppufError> {
        self.network().evaluate_lanes(challenges, scratch)
    }

    fn work_kind(&self) -> WorkKind {
        WorkKind::PpufSim
    }

    fn unit_cost(&self, _: &CostTable) -> u64 {
        self.simulation_cost_per_eval()
    }
}

#[derive(Debug, Clone, Default)]
pub enum Matcher {
    #[default]
    Exact,
    /// Accept a candidate within the extractor's per-block capacity.
    Fuzzy(FuzzyExtractor),
}

/// Per-evaluation measurement noise: `flips` random bits, seeded by
/// `seed ^ element`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub flips: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct SearchOptions {
    pub matcher: Matcher,
    pub noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchHit {
    pub element: u64,
    /// Zero-based index of the element within the set.
    pub position: u64,
}

/// Finds the first element `i` of `set` whose response to
/// `challenge_for_element(i)` matches `target`.
///
/// The search models a constant-time hardware sweep: the meter is charged
/// one hash and one evaluation for every element of the set, whether or
/// not the match comes early.
pub fn search_preimage<O: ResponseOracle>(
    oracle: &O,
    set: &SetDescriptor,
    target: &Response,
    profile: CryptoProfile,
    meter: &mut WorkMeter,
    options: &SearchOptions,
) -> Result<SearchHit, SearchError> {
    set.validate()?;
    let width = oracle.width();
    if target.len() != width {
        return Err(DppufError::WidthMismatch {
            expected: width,
            got: target.len(),
        }
        .into());
    }
    let n = set.size as u64;
    meter.charge(WorkKind::Hash, n);
    let unit = oracle.unit_cost(meter.costs());
    meter.charge_at(oracle.work_kind(), n, unit);

    let mut scratch = BatchScratch::default();
    let mut elements = set.iter().peekable();
    let mut position = 0u64;
    while elements.peek().is_some() {
        let chunk: Vec<u64> = elements.by_ref().take(LANES).collect();
        let challenges: Vec<Challenge> = chunk
            .iter()
            .map(|&e| challenge_for_element(profile, e, width))
            .collect();
        let responses = oracle.respond_lanes(&challenges, &mut scratch)?;
        for (&element, mut r) in chunk.iter().zip(responses) {
            if let Some(noise) = options.noise {
                r = apply_noise(&r, noise.flips.min(width), noise.seed ^ element).expect("flips bounded by width");
            }
            let hit = match &options.matcher {
                Matcher::Exact => r == *target,
                Matcher::Fuzzy(fe) => fe.within_capacity(&r, target),
            };
            if hit {
                return Ok(SearchHit { element, position });
            }
            position += 1;
        }
    }
    Err(SearchError::NotFound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dppuf::DppufConfig;

    #[test]
    fn sha3_digest_keeps_leading_bits() {
        let c = challenge_for_element(CryptoProfile::Heavyweight, 42, 256);
        let d = crypto::hash_parts(CryptoProfile::Heavyweight, &[CHALLENGE_DOMAIN, &42u64.to_le_bytes()]);
        assert_eq!(c.as_bytes(), &d[..32]);
    }

    #[test]
    fn short_digest_is_extended_with_counter_blocks() {
        let c = challenge_for_element(CryptoProfile::Lightweight, 7, 600);
        let d = crypto::hash_parts(CryptoProfile::Lightweight, &[CHALLENGE_DOMAIN, &7u64.to_le_bytes()]);
        let d1 = crypto::hash_parts(CryptoProfile::Lightweight, &[&d, &1u32.to_be_bytes()]);
        let d2 = crypto::hash_parts(CryptoProfile::Lightweight, &[&d, &2u32.to_be_bytes()]);
        assert_eq!(&c.as_bytes()[..32], &d[..]);
        assert_eq!(&c.as_bytes()[32..64], &d1[..]);
        assert_eq!(&c.as_bytes()[64..75], &d2[..11]);
    }

    #[test]
    fn challenge_is_not_the_element_key() {
        for p in CryptoProfile::ALL {
            let c = challenge_for_element(p, 9, 128);
            assert_ne!(c.as_bytes(), &crypto::kdf_from_element(p, 9).0[..]);
        }
    }

    #[test]
    fn set_descriptor_bounds() {
        assert!(SetDescriptor::new(0, 0).is_err());
        assert!(SetDescriptor::new(0, MAX_SET_SIZE + 1).is_err());
        assert!(SetDescriptor::new(u64::MAX, 2).is_err());
        let s = SetDescriptor::new(u64::MAX, 1).unwrap();
        assert!(s.contains(u64::MAX));
        let s = SetDescriptor::new(10, 3).unwrap();
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![10, 11, 12]);
        assert!(!s.contains(13) && !s.contains(9));
    }

    #[test]
    fn singleton_set() {
        let inst = DppufInstance::<f64>::build(DppufConfig::new(256, 3)).unwrap();
        let p = CryptoProfile::Lightweight;
        let target = inst.evaluate(&challenge_for_element(p, 5, 256)).unwrap();
        let mut m = WorkMeter::new(CostTable::symbolic());
        let set = SetDescriptor::new(5, 1).unwrap();
        let hit = search_preimage(&inst, &set, &target, p, &mut m, &SearchOptions::default()).unwrap();
        assert_eq!(
            hit,
            SearchHit {
                element: 5,
                position: 0
            }
        );
        assert_eq!((m.ns(WorkKind::Hash), m.ns(WorkKind::PpufHw)), (1, 1));
    }

    #[test]
    fn charges_the_whole_set_even_on_early_hit() {
        let inst = DppufInstance::<f64>::build(DppufConfig::new(64, 3)).unwrap();
        let p = CryptoProfile::Midweight;
        let target = inst.evaluate(&challenge_for_element(p, 100, 64)).unwrap();
        let mut m = WorkMeter::new(CostTable::symbolic());
        let set = SetDescriptor::new(100, 500).unwrap();
        search_preimage(&inst, &set, &target, p, &mut m, &SearchOptions::default()).unwrap();
        assert_eq!(m.ns(WorkKind::Hash), 500);
        assert_eq!(m.count(WorkKind::PpufHw), 500);
    }

    #[test]
    fn noisy_search_needs_fuzzy_matching() {
        let inst = DppufInstance::<f64>::build(DppufConfig::new(256, 8)).unwrap();
        let p = CryptoProfile::Lightweight;
        let set = SetDescriptor::new(1000, 200).unwrap();
        let target = inst.evaluate(&challenge_for_element(p, 1150, 256)).unwrap();
        let noise = Some(NoiseSpec { flips: 6, seed: 99 });
        let mut m = WorkMeter::new(CostTable::symbolic());
        let exact = SearchOptions {
            matcher: Matcher::Exact,
            noise,
        };
        assert_eq!(
            search_preimage(&inst, &set, &target, p, &mut m, &exact),
            Err(SearchError::NotFound)
        );
        let fuzzy = SearchOptions {
            matcher: Matcher::Fuzzy(FuzzyExtractor::default()),
            noise,
        };
        assert_eq!(
            search_preimage(&inst, &set, &target, p, &mut m, &fuzzy)
                .unwrap()
                .element,
            1150
        );
    }

    #[test]
    fn target_width_is_checked() {
        let inst = DppufInstance::<f64>::build(DppufConfig::new(64, 3)).unwrap();
        let mut m = WorkMeter::new(CostTable::symbolic());
        let set = SetDescriptor::new(0, 1).unwrap();
        let r = search_preimage(
            &inst,
            &set,
            &BitString::zeros(8),
            CryptoProfile::Lightweight,
            &mut m,
            &SearchOptions::default(),
        );
        assert!(matches!(r, Err(SearchError::Puf(DppufError::WidthMismatch { .. }))));
    }
}
