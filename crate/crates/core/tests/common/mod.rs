//! Golden vector production and the hex dump format under `testdata/`.
//!
//! A dump is `#` comment lines followed by hex, whitespace ignored.

#![allow(dead_code)]

use std::cell::RefCell;
use std::path::PathBuf;
use std::rc::Rc;

use ppuf_fwupdate::attacks::adversaries::Eavesdrop;
use ppuf_fwupdate::bits::Challenge;
use ppuf_fwupdate::channel::Envelope;
use ppuf_fwupdate::config::SimConfig;
use ppuf_fwupdate::crypto::CryptoProfile;
use ppuf_fwupdate::dppuf::DppufConfig;
use ppuf_fwupdate::sim::{Fixture, Simulation};
use ppuf_fwupdate::wire::{self, MessageKind};
use ppuf_fwupdate::{Dppuf, PublicModel};
use sha2::{Digest, Sha256};

pub struct Golden {
    pub name: String,
    pub provenance: Vec<String>,
    pub bytes: Vec<u8>,
}

pub fn testdata_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../testdata")
}

pub fn render(g: &Golden) -> String {
    let mut s = String::new();
    for line in &g.provenance {
        s.push_str("# ");
        s.push_str(line);
        s.push('\n');
    }
    for chunk in g.bytes.chunks(32) {
        s.push_str(&hex::encode(chunk));
        s.push('\n');
    }
    s
}

pub fn parse_hex(text: &str) -> Vec<u8> {
    let digits: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| l.chars().filter(|c| !c.is_whitespace()))
        .collect();
    hex::decode(digits).expect("valid hex dump")
}

pub fn read_golden(name: &str) -> Vec<u8> {
    let path = testdata_dir().join(name);
    parse_hex(&std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display())))
}

pub fn golden_config(profile: CryptoProfile) -> SimConfig {
    let mut c = SimConfig {
        profile,
        ..SimConfig::default()
    };
    c.ed.set_size = 1024;
    c
}

/// Runs one honest session and returns every frame put on the wire.
pub fn capture(cfg: &SimConfig, image_len: usize) -> (Simulation, Vec<Envelope>) {
    let seen = Rc::new(RefCell::new(Vec::new()));
    let mut sim = Simulation::new(cfg.clone(), Fixture::standard(cfg, image_len), 1).unwrap();
    sim.set_adversary(Box::new(Eavesdrop { seen: seen.clone() }));
    sim.initiate(0).unwrap();
    sim.run().unwrap();
    let frames = seen.borrow().clone();
    (sim, frames)
}

pub fn first_frame(frames: &[Envelope], kind: MessageKind) -> Envelope {
    frames
        .iter()
        .find(|e| wire::peek_header(&e.bytes).map(|h| h.kind) == Ok(kind))
        .cloned()
        .unwrap_or_else(|| panic!("no {kind:?} frame"))
}

pub fn model_w8_seed1() -> Golden {
    let d = Dppuf::build(DppufConfig::new(8, 1)).unwrap();
    let m = PublicModel::export(&d, 1000, 1).unwrap();
    Golden {
        name: "model_w8_seed1.hex".into(),
        provenance: vec![
            "Public model file of the 8-bit instance built from seed 1, default topology and delays.".into(),
            "Declared costs: simulation 1000 ns, hardware 1 ns. No helper data.".into(),
        ],
        bytes: m.to_bytes(),
    }
}

pub fn table_w8_seed1() -> Golden {
    let d = Dppuf::build(DppufConfig::new(8, 1)).unwrap();
    let bytes = (0..256u64)
        .map(|c| d.evaluate(&Challenge::from_u64(8, c)).unwrap().as_bytes()[0])
        .collect();
    Golden {
        name: "dppuf_w8_seed1_table.hex".into(),
        provenance: vec![
            "Responses of the 8-bit seed-1 instance to challenges 0..=255, one byte each, MSB first.".into(),
            "Cross-checked against an independent straight-line evaluator in the dppuf unit tests.".into(),
        ],
        bytes,
    }
}

pub fn update_request(profile: CryptoProfile) -> Golden {
    let (_, frames) = capture(&golden_config(profile), 1000);
    let f = first_frame(&frames, MessageKind::UpdateRequest);
    Golden {
        name: format!("update_request_{}.hex", profile.short_name()),
        provenance: vec![
            format!("UpdateRequest frame, {profile} profile, as forwarded by the repository to the server."),
            "Config: defaults (seed 1, 256-bit PUF) with ed.set_size = 1024; image 1000 bytes.".into(),
        ],
        bytes: f.bytes,
    }
}

pub fn package_summary() -> Golden {
    let (_, frames) = capture(&golden_config(CryptoProfile::Lightweight), 233 * 1024);
    let f = first_frame(&frames, MessageKind::FirmwarePackage);
    let mut bytes = (f.bytes.len() as u64).to_le_bytes().to_vec();
    bytes.extend_from_slice(&Sha256::digest(&f.bytes));
    bytes.extend_from_slice(&f.bytes[..64]);
    Golden {
        name: "firmware_package_lightweight_233k.hex".into(),
        provenance: vec![
            "Summary of the FirmwarePackage frame for a 233 KiB synthetic image, lightweight profile.".into(),
            "Layout: le64 frame length | SHA-256 of the frame | first 64 frame bytes.".into(),
            "Config: defaults (seed 1, 256-bit PUF) with ed.set_size = 1024.".into(),
        ],
        bytes,
    }
}

pub fn all_golden() -> Vec<Golden> {
    let mut v = vec![model_w8_seed1(), table_w8_seed1()];
    v.extend(CryptoProfile::ALL.into_iter().map(update_request));
    v.push(package_summary());
    v
}
