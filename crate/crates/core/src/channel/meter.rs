//! Work metering in virtual nanoseconds.
//!
//! Every actor (and the adversary) charges its computation to a
//! [`WorkMeter`]. Totals are exact integers; the hash/encrypt/decrypt
//! totals are what the race analysis compares, while PUF evaluation and
//! protocol overhead (checksums, key derivation) are kept in their own
//! buckets.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkKind {
    Hash,
    Enc,
    Dec,
    PpufHw,
    PpufSim,
    /// Checksums, element key derivation, framing.
    Overhead,
}

impl WorkKind {
    pub const ALL: [WorkKind; 6] = [
        WorkKind::Hash,
        WorkKind::Enc,
        WorkKind::Dec,
        WorkKind::PpufHw,
        WorkKind::PpufSim,
        WorkKind::Overhead,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            WorkKind::Hash => "hash",
            WorkKind::Enc => "enc",
            WorkKind::Dec => "dec",
            WorkKind::PpufHw => "ppuf_hw",
            WorkKind::PpufSim => "ppuf_sim",
            WorkKind::Overhead => "overhead",
        }
    }
}

/// Per-operation virtual costs. Fixed costs are nanoseconds; the
/// `*_ps_per_byte` rates are picoseconds per byte and are rounded to the
/// nearest nanosecond per operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostTable {
    /// One hash of a set element (`t_hash`).
    pub hash: u64,
    /// Encrypt or decrypt of the 128-bit timestamp block (`t_dec1`).
    pub small_cipher: u64,
    /// Fixed part of a payload encrypt or decrypt (`t_dec2`).
    pub payload_cipher: u64,
    pub payload_cipher_ps_per_byte: u64,
    /// One hardware PUF evaluation (`dPPUF_gen`).
    pub ppuf_hw: u64,
    /// One public-model simulation.
    pub ppuf_sim: u64,
    pub checksum: u64,
    pub checksum_ps_per_byte: u64,
    pub kdf: u64,
}

impl CostTable {
    /// Pinned symbolic costs: `t_hash = 1`, `t_dec1 = 4`, `t_dec2 = 16`,
    /// hardware PUF 1, simulation 1000 (execution-simulation gap 10^3),
    /// zero-cost overhead.
    pub const fn symbolic() -> Self {
        Self {
            hash: 1,
            small_cipher: 4,
            payload_cipher: 16,
            payload_cipher_ps_per_byte: 0,
            ppuf_hw: 1,
            ppuf_sim: 1000,
            checksum: 0,
            checksum_ps_per_byte: 0,
            kdf: 0,
        }
    }

    pub fn unit_cost(&self, kind: WorkKind) -> u64 {
        match kind {
            WorkKind::Hash => self.hash,
            WorkKind::Enc | WorkKind::Dec => self.small_cipher,
            WorkKind::PpufHw => self.ppuf_hw,
            WorkKind::PpufSim => self.ppuf_sim,
            WorkKind::Overhead => self.kdf,
        }
    }

    pub fn payload_cost(&self, bytes: usize) -> u64 {
        self.payload_cipher + per_byte(self.payload_cipher_ps_per_byte, bytes)
    }

    pub fn checksum_cost(&self, bytes: usize) -> u64 {
        self.checksum + per_byte(self.checksum_ps_per_byte, bytes)
    }

    /// Simulation cost over hardware cost.
    pub fn esg_factor(&self) -> u64 {
        self.ppuf_sim.checked_div(self.ppuf_hw).unwrap_or(u64::MAX)
    }
}

impl Default for CostTable {
    fn default() -> Self {
        Self::symbolic()
    }
}

fn per_byte(ps_per_byte: u64, bytes: usize) -> u64 {
    let ps = ps_per_byte as u128 * bytes as u128;
    ((ps + 500) / 1000) as u64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkMeter {
    costs: CostTable,
    counts: [u64; 6],
    ns: [u64; 6],
}

impl WorkMeter {
    pub fn new(costs: CostTable) -> Self {
        Self {
            costs,
            counts: [0; 6],
            ns: [0; 6],
        }
    }

    pub fn costs(&self) -> &CostTable {
        &self.costs
    }

    /// Charges `units` operations at the table's unit cost for `kind`.
    pub fn charge(&mut self, kind: WorkKind, units: u64) -> u64 {
        let c = self.costs.unit_cost(kind);
        self.charge_at(kind, units, c)
    }

    /// Charges `units` operations at an explicit unit cost.
    pub fn charge_at(&mut self, kind: WorkKind, units: u64, unit_cost: u64) -> u64 {
        let ns = units * unit_cost;
        self.counts[kind.index()] += units;
        self.ns[kind.index()] += ns;
        ns
    }

    /// One payload-sized encrypt or decrypt.
    pub fn charge_payload(&mut self, kind: WorkKind, bytes: usize) -> u64 {
        debug_assert!(matches!(kind, WorkKind::Enc | WorkKind::Dec));
        let c = self.costs.payload_cost(bytes);
        self.charge_at(kind, 1, c)
    }

    pub fn charge_checksum(&mut self, bytes: usize) -> u64 {
        let c = self.costs.checksum_cost(bytes);
        self.charge_at(WorkKind::Overhead, 1, c)
    }

    pub fn total_ns(&self) -> u64 {
        self.ns.iter().sum()
    }

    pub fn ns(&self, kind: WorkKind) -> u64 {
        self.ns[kind.index()]
    }

    pub fn count(&self, kind: WorkKind) -> u64 {
        self.counts[kind.index()]
    }

    /// Hash + encrypt + decrypt time: the terms of the race analysis.
    pub fn crypto_ns(&self) -> u64 {
        self.ns(WorkKind::Hash) + self.ns(WorkKind::Enc) + self.ns(WorkKind::Dec)
    }

    pub fn merge(&mut self, other: &WorkMeter) {
        for i in 0..6 {
            self.counts[i] += other.counts[i];
            self.ns[i] += other.ns[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_charges_accumulate() {
        let mut m = WorkMeter::new(CostTable::symbolic());
        let n = 1_000_000;
        m.charge(WorkKind::Hash, n);
        m.charge(WorkKind::Hash, 2);
        assert_eq!(m.ns(WorkKind::Hash), (n + 2) * CostTable::symbolic().hash);
        assert_eq!(m.count(WorkKind::Hash), n + 2);
    }

    #[test]
    fn zero_units_is_identity() {
        let mut m = WorkMeter::new(CostTable::symbolic());
        let before = m.clone();
        m.charge(WorkKind::PpufSim, 0);
        assert_eq!(m, before);
    }

    #[test]
    fn payload_rate_rounds_to_nearest_ns() {
        let mut t = CostTable::symbolic();
        t.payload_cipher_ps_per_byte = 1500;
        assert_eq!(t.payload_cost(3), 16 + 5); // 4.5 ns rounds up
        assert_eq!(t.payload_cost(0), 16);
        assert_eq!(CostTable::symbolic().esg_factor(), 1000);
    }
}
