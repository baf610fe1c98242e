//! Gate-level delay model of a differential public PUF.
//!
//! Two copies of one gate network (left and right) see the same challenge
//! and compute the same logic values; they differ only in their per-gate
//! delays. After the last layer an arbiter per wire outputs 1 iff the left
//! copy's signal arrives strictly earlier than the right copy's.
//!
//! # Netlist
//!
//! `W` wires, layers numbered `k = 0..L`. Layer pair `m = k / 2` uses the
//! butterfly stride `s = W >> (1 + m mod log2 W)` and the tap offset
//! `t = s / 2` (or `W / 2` when `s = 1`). A wire `j` is *lower* when
//! `j & s == 0` and *upper* otherwise.
//!
//! * Input drivers: wire `j` starts at the driver delay selected by the
//!   challenge bit (rise or fall).
//! * Booster (2-input XOR): each lower wire `j` becomes `v[j] ^ v[j|s]`,
//!   arriving at `max(a[j], a[j|s])` plus the gate delay for its new value.
//!   Upper wires pass through.
//! * Represser (NAND based): each upper wire `j` is combined with
//!   `NAND(v[p], v[q])`, `p = j ^ s`, `q = p ^ t`, and becomes
//!   `v[j] ^ nand`. The NAND output time follows controlling-value rules:
//!   a single 0 input decides it, two 0 inputs race (earliest wins), two 1
//!   inputs wait for the latest. Lower wires pass through. Afterwards every
//!   wire carrying a 1 crosses its left and right signals (the cross-coupled
//!   pair), so timing differences change sign depending on the logic state.
//!
//! Both layer kinds only rewrite one half of the wires from the other half,
//! so the logic map is invertible and never collapses to a constant.

mod batch;
mod metrics;
mod model;
mod search;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::{BitString, Challenge, Response};
use crate::scalar::DelayScalar;

pub use batch::{BatchScratch, LANES};
pub use metrics::{exhaustive_sac, inter_instance_distance, sac_metric, sac_report, SacReport, SAC_BINS};
pub use model::{ModelFileError, PpufModel, MIN_ESG_FACTOR, MODEL_FILE_VERSION};
pub use search::{
    challenge_for_element, search_preimage, Matcher, NoiseSpec, ResponseOracle, SearchError, SearchHit, SearchOptions,
    SetDescriptor, CHALLENGE_DOMAIN, MAX_SET_SIZE,
};

/// Layer count of the default topology.
pub const DEFAULT_LAYERS: usize = 24;
pub const DEFAULT_WIDTH: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum DppufError {
    #[error("width {0} must be a power of two and at least 8")]
    InvalidWidth(usize),
    #[error("layer pattern is empty")]
    EmptyPattern,
    #[error("layer pattern must alternate booster and represser (layer {0})")]
    NotAlternating(usize),
    #[error("delay distribution needs positive mean and stddev (mean {mean}, stddev {stddev})")]
    InvalidDelay { mean: f64, stddev: f64 },
    #[error("challenge has {got} bits, PUF width is {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("delay table has {got} entries, topology needs {expected}")]
    TableShape { expected: usize, got: usize },
    #[error("simulation cost {sim} is below 1000x the hardware cost {hw}")]
    GapTooSmall { sim: u64, hw: u64 },
    #[error("need at least 100 vectors, got {0}")]
    TooFewVectors(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Booster,
    Represser,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayDistribution {
    pub mean_ps: f64,
    pub stddev_ps: f64,
}

impl Default for DelayDistribution {
    fn default() -> Self {
        Self {
            mean_ps: 100.0,
            stddev_ps: 10.0,
        }
    }
}

/// Public shape of the network: what the model file describes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub width: usize,
    pub layers: Vec<LayerKind>,
}

impl Topology {
    pub fn alternating(width: usize, layers: usize) -> Self {
        Self {
            width,
            layers: (0..layers)
                .map(|k| {
                    if k % 2 == 0 {
                        LayerKind::Booster
                    } else {
                        LayerKind::Represser
                    }
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), DppufError> {
        if self.width < 8 || !self.width.is_power_of_two() {
            return Err(DppufError::InvalidWidth(self.width));
        }
        if self.layers.is_empty() {
            return Err(DppufError::EmptyPattern);
        }
        if let Some(k) = (1..self.layers.len()).find(|&k| self.layers[k] == self.layers[k - 1]) {
            return Err(DppufError::NotAlternating(k));
        }
        Ok(())
    }

    /// Delay entries per side: input drivers plus every layer, two per wire.
    pub fn table_len(&self) -> usize {
        (self.layers.len() + 1) * self.width * 2
    }

    fn wiring(&self) -> Vec<Wiring> {
        let lg = self.width.trailing_zeros() as usize;
        self.layers
            .iter()
            .enumerate()
            .map(|(k, &kind)| {
                let stride = self.width >> (1 + (k / 2) % lg);
                let tap = if stride > 1 { stride >> 1 } else { self.width / 2 };
                Wiring { kind, stride, tap }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DppufConfig {
    pub width: usize,
    pub layer_pattern: Vec<LayerKind>,
    pub delay_distribution: DelayDistribution,
    pub seed: u64,
}

impl DppufConfig {
    /// Default topology (24 alternating layers, 100 ps +- 10 ps) at `width`.
    pub fn new(width: usize, seed: u64) -> Self {
        Self {
            width,
            layer_pattern: Topology::alternating(width, DEFAULT_LAYERS).layers,
            delay_distribution: DelayDistribution::default(),
            seed,
        }
    }

    pub fn topology(&self) -> Topology {
        Topology {
            width: self.width,
            layers: self.layer_pattern.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), DppufError> {
        self.topology().validate()?;
        let d = self.delay_distribution;
        if !(d.stddev_ps > 0.0 && d.mean_ps > 0.0 && d.stddev_ps.is_finite() && d.mean_ps.is_finite()) {
            return Err(DppufError::InvalidDelay {
                mean: d.mean_ps,
                stddev: d.stddev_ps,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Wiring {
    kind: LayerKind,
    stride: usize,
    tap: usize,
}

/// Reusable evaluation buffers.
#[derive(Debug, Clone, Default)]
pub struct Scratch<T> {
    vals: Vec<u8>,
    left: Vec<T>,
    right: Vec<T>,
}

/// The two delay tables plus the wiring they hang off.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DelayNetwork<T> {
    topology: Topology,
    wiring: Vec<Wiring>,
    left: Vec<T>,
    right: Vec<T>,
}

impl<T: DelayScalar> DelayNetwork<T> {
    pub(crate) fn new(topology: Topology, left: Vec<T>, right: Vec<T>) -> Result<Self, DppufError> {
        topology.validate()?;
        let expected = topology.table_len();
        for got in [left.len(), right.len()] {
            if got != expected {
                return Err(DppufError::TableShape { expected, got });
            }
        }
        Ok(Self {
            wiring: topology.wiring(),
            topology,
            left,
            right,
        })
    }

    pub(crate) fn topology(&self) -> &Topology {
        &self.topology
    }

    pub(crate) fn tables(&self) -> (&[T], &[T]) {
        (&self.left, &self.right)
    }

    pub(crate) fn evaluate(&self, challenge: &Challenge, s: &mut Scratch<T>) -> Result<Response, DppufError> {
        let w = self.topology.width;
        if challenge.len() != w {
            return Err(DppufError::WidthMismatch {
                expected: w,
                got: challenge.len(),
            });
        }
        s.vals.clear();
        s.vals.extend(challenge.iter().map(u8::from));
        s.left.clear();
        s.right.clear();
        for j in 0..w {
            let i = 2 * j + s.vals[j] as usize;
            s.left.push(self.left[i]);
            s.right.push(self.right[i]);
        }

        // Data-dependent choices below index small arrays instead of
        // branching; random logic values defeat branch prediction.
        let (vals, tl, tr) = (&mut s.vals, &mut s.left, &mut s.right);
        for (k, wiring) in self.wiring.iter().enumerate() {
            let base = (k + 1) * w * 2;
            let (dl, dr) = (&self.left[base..base + 2 * w], &self.right[base..base + 2 * w]);
            let st = wiring.stride;
            match wiring.kind {
                LayerKind::Booster => {
                    for b in (0..w).step_by(2 * st) {
                        let (vlo, vhi) = vals[b..b + 2 * st].split_at_mut(st);
                        let (llo, lhi) = tl[b..b + 2 * st].split_at_mut(st);
                        let (rlo, rhi) = tr[b..b + 2 * st].split_at_mut(st);
                        let dlc = dl[2 * b..2 * b + 2 * st].chunks_exact(2);
                        let drc = dr[2 * b..2 * b + 2 * st].chunks_exact(2);
                        for (((((vl, vh), (ll, lh)), (rl, rh)), dl2), dr2) in vlo
                            .iter_mut()
                            .zip(vhi.iter())
                            .zip(llo.iter_mut().zip(lhi.iter()))
                            .zip(rlo.iter_mut().zip(rhi.iter()))
                            .zip(dlc)
                            .zip(drc)
                        {
                            let v = *vl ^ *vh;
                            *ll = ll.max(*lh) + dl2[v as usize];
                            *rl = rl.max(*rh) + dr2[v as usize];
                            *vl = v;
                        }
                    }
                }
                LayerKind::Represser => {
                    let tap = wiring.tap;
                    for b in (st..w).step_by(2 * st) {
                        for j in b..b + st {
                            let p = j - st;
                            let q = p ^ tap;
                            let (a, bq) = (vals[p], vals[q]);
                            let sel = (2 * a + bq) as usize;
                            let (lp, lq, rp, rq) = (tl[p], tl[q], tr[p], tr[q]);
                            let nl = [lp.min(lq), lp, lq, lp.max(lq)][sel];
                            let nr = [rp.min(rq), rp, rq, rp.max(rq)][sel];
                            let v = vals[j] ^ (1 - (a & bq));
                            let d = 2 * j + v as usize;
                            tl[j] = tl[j].max(nl) + dl[d];
                            tr[j] = tr[j].max(nr) + dr[d];
                            vals[j] = v;
                        }
                    }
                    for ((l, r), v) in tl.iter_mut().zip(tr.iter_mut()).zip(vals.iter()) {
                        let pair = [*l, *r];
                        *l = pair[*v as usize];
                        *r = pair[1 - *v as usize];
                    }
                }
            }
        }

        // ties resolve to 0
        let mut packed = vec![0u8; w / 8];
        for j in 0..w {
            packed[j >> 3] |= ((tl[j] < tr[j]) as u8) << (7 - (j & 7));
        }
        Ok(BitString::from_bytes(w, &packed).expect("whole bytes"))
    }
}

/// One manufactured device: private delays plus a 128-bit identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct DppufInstance<T = f64> {
    config: DppufConfig,
    instance_id: [u8; 16],
    network: DelayNetwork<T>,
}

impl<T: DelayScalar> DppufInstance<T> {
    /// Samples every gate delay from the configured normal distribution
    /// (negative draws clamp to zero). Deterministic in the config.
    pub fn build(config: DppufConfig) -> Result<Self, DppufError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut instance_id = [0u8; 16];
        rng.fill_bytes(&mut instance_id);
        let d = config.delay_distribution;
        let normal = Normal::new(d.mean_ps, d.stddev_ps).expect("validated distribution");
        let topology = config.topology();
        let len = topology.table_len();
        let sample = |rng: &mut ChaCha8Rng| -> Vec<T> {
            (0..len)
                .map(|_| T::from_f64_lossy(normal.sample(rng).max(0.0)))
                .collect()
        };
        let left = sample(&mut rng);
        let right = sample(&mut rng);
        let network = DelayNetwork::new(topology, left, right)?;
        Ok(Self {
            config,
            instance_id,
            network,
        })
    }

    /// Builds an instance around explicit delay tables. Identical tables give
    /// an all-tie (constant zero) device, which tests use as a degenerate case.
    pub fn from_delay_tables(
        config: DppufConfig,
        instance_id: [u8; 16],
        left: Vec<T>,
        right: Vec<T>,
    ) -> Result<Self, DppufError> {
        config.topology().validate()?;
        let network = DelayNetwork::new(config.topology(), left, right)?;
        Ok(Self {
            config,
            instance_id,
            network,
        })
    }

    pub fn config(&self) -> &DppufConfig {
        &self.config
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn instance_id(&self) -> [u8; 16] {
        self.instance_id
    }

    pub fn delay_tables(&self) -> (&[T], &[T]) {
        self.network.tables()
    }

    pub fn evaluate(&self, challenge: &Challenge) -> Result<Response, DppufError> {
        self.network.evaluate(challenge, &mut Scratch::default())
    }

    pub fn evaluate_with(&self, challenge: &Challenge, scratch: &mut Scratch<T>) -> Result<Response, DppufError> {
        self.network.evaluate(challenge, scratch)
    }

    pub(crate) fn network(&self) -> &DelayNetwork<T> {
        &self.network
    }
}
