//! End-to-end update timing over a grid of profiles and image sizes.
//!
//! Virtual times use per-profile payload cipher rates fitted once against
//! the published FPGA timings and frozen in [`CALIBRATED_PS_PER_BYTE`].
//! Everything else keeps the configured costs.

use std::time::Instant;

use serde::Serialize;

use crate::actors::{FirmwareEntry, FirmwareRepo, Verdict};
use crate::channel::{CostTable, WorkKind};
use crate::config::SimConfig;
use crate::crypto::CryptoProfile;
use crate::sim::{synthetic_image, Fixture, SimError, Simulation};

pub const KIB: usize = 1024;
pub const REFERENCE_SIZES_KIB: [usize; 3] = [233, 323, 1183];

/// Published end-to-end update times in seconds, rows in
/// [`CryptoProfile::ALL`] order, columns in [`REFERENCE_SIZES_KIB`] order.
pub const REFERENCE_SECONDS: [[f64; 3]; 3] = [
    [0.3407, 0.4722, 1.7296],
    [0.3356, 0.4653, 1.7041],
    [0.3338, 0.4627, 1.6946],
];

/// Payload cipher rate per profile, from [`calibrate`] with the default
/// configuration.
pub const CALIBRATED_PS_PER_BYTE: [u64; 3] = [355_854, 350_592, 348_633];

pub const TOLERANCE: f64 = 0.05;

/// Device deadline during the bench, long enough for megabyte packages at
/// the calibrated rates.
pub const BENCH_DEADLINE_NS: u64 = 10 * crate::channel::NS_PER_SEC;

fn row(profile: CryptoProfile) -> usize {
    CryptoProfile::ALL
        .iter()
        .position(|&p| p == profile)
        .expect("known profile")
}

pub fn calibrated_costs(profile: CryptoProfile, base: CostTable) -> CostTable {
    CostTable {
        payload_cipher_ps_per_byte: CALIBRATED_PS_PER_BYTE[row(profile)],
        ..base
    }
}

pub fn reference_seconds(profile: CryptoProfile, size_kib: usize) -> Option<f64> {
    let col = REFERENCE_SIZES_KIB.iter().position(|&s| s == size_kib)?;
    Some(REFERENCE_SECONDS[row(profile)][col])
}

/// Virtual time split by protocol phase. The parts sum to the total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Phases {
    /// Device work to issue the request.
    pub request_ns: u64,
    /// Server preimage search.
    pub search_ns: u64,
    /// Server packaging plus model lookups.
    pub package_ns: u64,
    /// Link time and waiting between actors.
    pub transfer_ns: u64,
    /// Device search, decryption and checks.
    pub unpack_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchCell {
    pub profile: CryptoProfile,
    pub size_kib: usize,
    pub payload_bytes: usize,
    pub virtual_ns: u64,
    pub virtual_seconds: f64,
    pub wall_ms: f64,
    pub bytes_on_wire: u64,
    pub phases: Phases,
    pub accepted: bool,
    /// The installed image equals the served one.
    pub image_matches: bool,
    pub reference_seconds: Option<f64>,
    pub relative_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub cells: Vec<BenchCell>,
    /// Virtual time strictly increases with size for every profile.
    pub monotonic: bool,
    pub max_relative_error: Option<f64>,
}

impl BenchReport {
    pub fn cell(&self, profile: CryptoProfile, size_kib: usize) -> Option<&BenchCell> {
        self.cells
            .iter()
            .find(|c| c.profile == profile && c.size_kib == size_kib)
    }

    pub fn within_tolerance(&self) -> bool {
        self.max_relative_error.is_some_and(|e| e <= TOLERANCE)
    }
}

/// One honest update of `bytes` bytes under `cfg` as given.
pub fn run_cell(cfg: &SimConfig, bytes: usize) -> Result<(BenchCell, Simulation), SimError> {
    let start = Instant::now();
    let base = Fixture::standard(cfg, 0);
    let mut repo = FirmwareRepo::new();
    let entry = base.repo.entries().next().expect("standard fixture has one entry");
    let image = synthetic_image(cfg.derive_seed(&format!("bench/{bytes}")), bytes);
    repo.insert(FirmwareEntry {
        fv: entry.fv,
        image: image.clone(),
    })?;
    let mut sim = Simulation::new(
        cfg.clone(),
        Fixture {
            installed: base.installed,
            repo,
        },
        1,
    )?;
    sim.initiate(0)?;
    let request_ns = sim.ed(0).meter().total_ns();
    sim.run()?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;

    let verdict = sim.verdicts().iter().find(|v| v.ed == 0);
    let accepted = matches!(verdict.map(|v| &v.verdict), Some(Verdict::Accept { .. }));
    let virtual_ns = verdict.map_or(0, |v| v.decided);
    let fds = sim.fds().meter();
    let search_ns = fds.ns(WorkKind::Hash) + fds.ns(WorkKind::PpufHw);
    let package_ns = fds.total_ns() - search_ns + sim.ppmr().meter().total_ns();
    let unpack_ns = sim.ed(0).meter().total_ns() - request_ns;
    let transfer_ns = virtual_ns.saturating_sub(request_ns + search_ns + package_ns + unpack_ns);
    let cell = BenchCell {
        profile: cfg.profile,
        size_kib: bytes / KIB,
        payload_bytes: bytes,
        virtual_ns,
        virtual_seconds: virtual_ns as f64 / 1e9,
        wall_ms,
        bytes_on_wire: sim.net_stats().bytes,
        phases: Phases {
            request_ns,
            search_ns,
            package_ns,
            transfer_ns,
            unpack_ns,
        },
        accepted,
        image_matches: sim.ed(0).image() == Some(&image[..]),
        reference_seconds: None,
        relative_error: None,
    };
    Ok((cell, sim))
}

/// Runs every profile against every size with the calibrated payload
/// rates. `cfg.profile` is ignored.
pub fn run_bench(cfg: &SimConfig, sizes_kib: &[usize]) -> Result<BenchReport, SimError> {
    let mut cells = Vec::new();
    for profile in CryptoProfile::ALL {
        let mut c = cfg.clone();
        c.profile = profile;
        c.costs = calibrated_costs(profile, cfg.costs);
        c.ed.response_deadline_ns = c.ed.response_deadline_ns.max(BENCH_DEADLINE_NS);
        for &kib in sizes_kib {
            let (mut cell, _) = run_cell(&c, kib * KIB)?;
            cell.size_kib = kib;
            cell.reference_seconds = reference_seconds(profile, kib);
            cell.relative_error = cell.reference_seconds.map(|r| (cell.virtual_seconds - r).abs() / r);
            cells.push(cell);
        }
    }
    let monotonic = CryptoProfile::ALL.iter().all(|&p| {
        let mut row: Vec<&BenchCell> = cells.iter().filter(|c| c.profile == p).collect();
        row.sort_by_key(|c| c.size_kib);
        row.windows(2).all(|w| w[0].virtual_ns < w[1].virtual_ns)
    });
    let max_relative_error = cells
        .iter()
        .filter_map(|c| c.relative_error)
        .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))));
    Ok(BenchReport {
        cells,
        monotonic,
        max_relative_error,
    })
}

/// Fits each profile's payload cipher rate to the reference row: measures
/// the size-independent time with an empty image, then least squares
/// through the four payload-sized cipher operations of each update.
pub fn calibrate(cfg: &SimConfig) -> Result<[u64; 3], SimError> {
    let mut out = [0u64; 3];
    for (i, profile) in CryptoProfile::ALL.into_iter().enumerate() {
        let mut c = cfg.clone();
        c.profile = profile;
        c.costs.payload_cipher_ps_per_byte = 0;
        c.ed.response_deadline_ns = c.ed.response_deadline_ns.max(BENCH_DEADLINE_NS);
        let (empty, _) = run_cell(&c, 0)?;
        let fixed = empty.virtual_ns as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for (j, &kib) in REFERENCE_SIZES_KIB.iter().enumerate() {
            let bytes = 4.0 * (kib * KIB) as f64;
            num += (REFERENCE_SECONDS[i][j] * 1e9 - fixed) * bytes;
            den += bytes * bytes;
        }
        out[i] = (num / den * 1000.0).round() as u64;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        let mut c = SimConfig::default();
        c.puf.width = 64;
        c.ed.set_size = 256;
        c
    }

    #[test]
    fn small_grid_is_monotonic_and_complete() {
        let r = run_bench(&small(), &[1, 2, 4]).unwrap();
        assert_eq!(r.cells.len(), 9);
        assert!(r.monotonic);
        assert!(r.cells.iter().all(|c| c.accepted && c.image_matches));
        assert!(r.max_relative_error.is_none());
    }

    #[test]
    fn phases_sum_to_total() {
        let (cell, _) = run_cell(&small(), 5000).unwrap();
        let p = cell.phases;
        assert_eq!(
            p.request_ns + p.search_ns + p.package_ns + p.transfer_ns + p.unpack_ns,
            cell.virtual_ns
        );
        assert!(cell.bytes_on_wire > 5000);
    }

    #[test]
    fn reference_lookup() {
        assert_eq!(reference_seconds(CryptoProfile::Midweight, 323), Some(0.4653));
        assert_eq!(reference_seconds(CryptoProfile::Midweight, 1), None);
    }

    #[test]
    #[ignore = "runs three full-size sessions; reproduces the frozen rates"]
    fn calibration_reproduces_frozen_rates() {
        assert_eq!(calibrate(&SimConfig::default()).unwrap(), CALIBRATED_PS_PER_BYTE);
    }
}
