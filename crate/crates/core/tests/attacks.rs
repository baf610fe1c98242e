//! Attack drivers on a reduced configuration.

use ppuf_fwupdate::attacks::{self, ScenarioKind};
use ppuf_fwupdate::config::SimConfig;

fn reduced() -> SimConfig {
    let mut c = SimConfig::default();
    c.puf.width = 64;
    c.ed.set_size = 256;
    c
}

#[test]
fn every_scenario_is_defended() {
    for o in attacks::run_all(&reduced()).unwrap() {
        assert!(o.defended(), "{}: {}", o.scenario, attacks::outcome_json(&o));
    }
}

#[test]
fn mitm_meters_follow_the_closed_form() {
    let o = attacks::run_scenario(ScenarioKind::Mitm, &reduced()).unwrap();
    assert_eq!(o.details["meters_match_closed_form"], true);
    assert_eq!(o.details["swapped_image"], true);
    assert!(o.adversary_meter_ns > o.server_meter_ns);
}

#[test]
fn rejection_causes() {
    let cfg = reduced();
    let cause = |k| {
        attacks::run_scenario(k, &cfg)
            .unwrap()
            .rejection_cause
            .map(|c| c.name().to_string())
    };
    assert_eq!(cause(ScenarioKind::Rollback).as_deref(), Some("rollback"));
    assert_eq!(cause(ScenarioKind::Mismatch).as_deref(), Some("mismatch"));
    assert_eq!(cause(ScenarioKind::Obsolete).as_deref(), Some("expired"));
}

#[test]
fn tamper_engages_cooldown() {
    let o = attacks::run_scenario(ScenarioKind::Tamper, &reduced()).unwrap();
    assert_eq!(o.details["cooldown_engaged"], true);
    assert_eq!(o.details["o2_flip_cause"], "corrupt");
    assert_eq!(o.details["o2_flip_rechecksummed_cause"], "forged");
}

#[test]
fn scenario_names_round_trip() {
    for k in ScenarioKind::ALL {
        assert_eq!(k.name().parse::<ScenarioKind>().unwrap(), k);
    }
}
