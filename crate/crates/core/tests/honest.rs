//! Honest sessions on a reduced configuration.

use ppuf_fwupdate::actors::Verdict;
use ppuf_fwupdate::bench;
use ppuf_fwupdate::config::SimConfig;
use ppuf_fwupdate::crypto::CryptoProfile;
use ppuf_fwupdate::sim::{Fixture, Simulation};

fn reduced(profile: CryptoProfile) -> SimConfig {
    let mut c = SimConfig {
        profile,
        ..SimConfig::default()
    };
    c.puf.width = 64;
    c.ed.set_size = 256;
    c
}

fn run(cfg: &SimConfig, len: usize, devices: u16) -> Simulation {
    let fixture = Fixture::standard(cfg, len);
    let mut sim = Simulation::new(cfg.clone(), fixture, devices).unwrap();
    for d in 0..devices {
        sim.initiate(d).unwrap();
    }
    sim.run().unwrap();
    sim
}

fn accepted(sim: &Simulation, ed: u16) -> bool {
    sim.verdicts()
        .iter()
        .any(|v| v.ed == ed && matches!(v.verdict, Verdict::Accept { .. }))
}

#[test]
fn every_profile_installs_every_size() {
    for p in CryptoProfile::ALL {
        let cfg = reduced(p);
        for len in [0, 1, 15, 16, 17, 4096, 70_001] {
            let sim = run(&cfg, len, 1);
            assert!(accepted(&sim, 0), "{p} {len}");
            let served = Fixture::standard(&cfg, len);
            let entry = served.repo.entries().next().unwrap();
            assert_eq!(sim.ed(0).image(), Some(&entry.image[..]), "{p} {len}");
        }
    }
}

#[test]
fn several_devices_update_independently() {
    let sim = run(&reduced(CryptoProfile::Midweight), 2048, 4);
    assert!((0..4).all(|d| accepted(&sim, d)));
}

#[test]
fn noisy_responses_within_capacity_still_install() {
    let mut cfg = reduced(CryptoProfile::Lightweight);
    cfg.noise_flips = 2;
    let sim = run(&cfg, 1024, 1);
    assert!(accepted(&sim, 0));
}

#[test]
fn calibrated_virtual_time_grows_with_image_size() {
    let mut cfg = reduced(CryptoProfile::Heavyweight);
    cfg.costs = bench::calibrated_costs(cfg.profile, cfg.costs);
    cfg.ed.response_deadline_ns = bench::BENCH_DEADLINE_NS;
    let times: Vec<u64> = [0usize, 10_000, 100_000]
        .iter()
        .map(|&len| run(&cfg, len, 1).verdicts()[0].decided)
        .collect();
    assert!(times.windows(2).all(|w| w[0] < w[1]), "{times:?}");
}
