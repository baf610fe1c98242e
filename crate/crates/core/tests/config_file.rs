//! The shipped `config/default.toml` lists every tunable at its default.
//!
//! `UPDATE_GOLDEN=1` rewrites it.

use std::path::PathBuf;

use ppuf_fwupdate::config::SimConfig;

fn path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../config/default.toml")
}

#[test]
fn shipped_defaults_match_the_code() {
    let rendered = SimConfig::default().to_toml().unwrap();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(path(), &rendered).unwrap();
    }
    let shipped = std::fs::read_to_string(path()).unwrap();
    assert_eq!(SimConfig::from_toml(&shipped).unwrap(), SimConfig::default());
    assert_eq!(shipped, rendered);
}

#[test]
fn partial_files_fill_in_defaults() {
    let c = SimConfig::from_toml("seed = 7\n[puf]\nwidth = 64\n").unwrap();
    assert_eq!(c.seed, 7);
    assert_eq!(c.puf.width, 64);
    assert_eq!(c.ed, SimConfig::default().ed);
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(SimConfig::from_toml("sede = 7\n").is_err());
}
