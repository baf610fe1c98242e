//! Attack scenarios, each run next to an honest control, plus the
//! closed-form dictionary and race analyses.

pub mod adversaries;
pub mod dictionary;
pub mod race;

use std::cell::RefCell;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::actors::{FirmwareEntry, FirmwareRepo, RejectCause, Verdict};
use crate::bits::Challenge;
use crate::channel::{ActorId, Adversary, Envelope, WorkKind, WorkMeter};
use crate::config::SimConfig;
use crate::crypto;
use crate::dppuf::{BatchScratch, ResponseOracle, LANES};
use crate::sim::{synthetic_image, Fixture, SimError, Simulation, DEFAULT_DEVICE};
use crate::wire::{self, DeviceKey, FirmwareVersion, Message};

use adversaries::*;
pub use dictionary::{dictionary_probability, dictionary_report, dictionary_size_for_probability, DictionaryReport};
pub use race::{mitm_race_analysis, RaceAnalysis, RaceCosts, RaceError};

/// Image size used by the scenarios.
pub const SCENARIO_IMAGE_LEN: usize = 4096;
pub const INTERCEPT_TRIALS: usize = 100;
/// Set size for the interception trials; ciphertext layout does not depend
/// on it.
pub const INTERCEPT_SET_SIZE: u32 = 1024;
const DAY: u64 = 86_400;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Rollback,
    Mismatch,
    Obsolete,
    Redirect,
    Tamper,
    Intercept,
    Dictionary,
    Mitm,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 8] = [
        ScenarioKind::Rollback,
        ScenarioKind::Mismatch,
        ScenarioKind::Obsolete,
        ScenarioKind::Redirect,
        ScenarioKind::Tamper,
        ScenarioKind::Intercept,
        ScenarioKind::Dictionary,
        ScenarioKind::Mitm,
    ];

    /// The six threat scenarios run as full protocol sessions.
    pub const STRIDE: [ScenarioKind; 6] = [
        ScenarioKind::Rollback,
        ScenarioKind::Mismatch,
        ScenarioKind::Obsolete,
        ScenarioKind::Redirect,
        ScenarioKind::Tamper,
        ScenarioKind::Intercept,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Rollback => "rollback",
            ScenarioKind::Mismatch => "mismatch",
            ScenarioKind::Obsolete => "obsolete",
            ScenarioKind::Redirect => "redirect",
            ScenarioKind::Tamper => "tamper",
            ScenarioKind::Intercept => "intercept",
            ScenarioKind::Dictionary => "dictionary",
            ScenarioKind::Mitm => "mitm",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackOutcome {
    pub scenario: ScenarioKind,
    pub adversary_succeeded: bool,
    pub rejection_cause: Option<RejectCause>,
    pub control_accepted: bool,
    pub adversary_meter_ns: u64,
    pub server_meter_ns: u64,
    pub details: BTreeMap<String, Value>,
}

impl AttackOutcome {
    fn new(scenario: ScenarioKind) -> Self {
        Self {
            scenario,
            adversary_succeeded: false,
            rejection_cause: None,
            control_accepted: false,
            adversary_meter_ns: 0,
            server_meter_ns: 0,
            details: BTreeMap::new(),
        }
    }

    fn detail(&mut self, key: &str, v: impl Into<Value>) -> &mut Self {
        self.details.insert(key.to_string(), v.into());
        self
    }

    /// Held when the attack failed and the control went through.
    pub fn defended(&self) -> bool {
        !self.adversary_succeeded && self.control_accepted
    }
}

pub fn run_scenario(kind: ScenarioKind, cfg: &SimConfig) -> Result<AttackOutcome, AttackError> {
    match kind {
        ScenarioKind::Rollback => run_rollback_attack(cfg),
        ScenarioKind::Mismatch => run_mismatch_attack(cfg),
        ScenarioKind::Obsolete => run_obsolete_attack(cfg),
        ScenarioKind::Redirect => run_redirection_attack(cfg),
        ScenarioKind::Tamper => run_tamper_attack(cfg),
        ScenarioKind::Intercept => run_interception_analysis(cfg, INTERCEPT_TRIALS),
        ScenarioKind::Dictionary => run_dictionary_analysis(cfg),
        ScenarioKind::Mitm => run_mitm_attack(cfg),
    }
}

fn fixture(cfg: &SimConfig, installed: FirmwareVersion, served: &[FirmwareVersion]) -> Result<Fixture, AttackError> {
    let mut repo = FirmwareRepo::new();
    for (i, fv) in served.iter().enumerate() {
        let image = synthetic_image(cfg.derive_seed(&format!("image{i}")), SCENARIO_IMAGE_LEN);
        repo.insert(FirmwareEntry { fv: *fv, image })
            .map_err(|e| AttackError::Setup(e.to_string()))?;
    }
    Ok(Fixture { installed, repo })
}

fn session(
    cfg: &SimConfig,
    fx: Fixture,
    devices: u16,
    adversary: Option<Box<dyn Adversary>>,
) -> Result<Simulation, AttackError> {
    let mut sim = Simulation::new(cfg.clone(), fx, devices)?;
    if let Some(a) = adversary {
        sim.set_adversary(a);
    }
    for ed in 0..devices {
        sim.initiate(ed)?;
    }
    sim.run()?;
    Ok(sim)
}

fn accepted(sim: &Simulation, ed: u16) -> bool {
    sim.verdicts()
        .iter()
        .any(|v| v.ed == ed && matches!(v.verdict, Verdict::Accept { .. }))
}

/// First rejection seen by `ed`, including a deadline expiring unanswered.
fn first_cause(sim: &Simulation, ed: u16) -> Option<RejectCause> {
    sim.verdicts()
        .iter()
        .filter(|v| v.ed == ed)
        .find_map(|v| v.verdict.cause())
        .or_else(|| sim.ed(ed).failures().next().map(|&(_, c)| c))
}

fn control(cfg: &SimConfig) -> Result<Simulation, AttackError> {
    session(cfg, Fixture::standard(cfg, SCENARIO_IMAGE_LEN), 1, None)
}

fn fv(sw: u32, release: u64, best_before: u64) -> FirmwareVersion {
    FirmwareVersion::for_device(DEFAULT_DEVICE, sw, release, best_before)
}

/// The device runs revision 5; the adversary replays a recorded package for
/// revision 4, then one for revision 5 itself.
pub fn run_rollback_attack(cfg: &SimConfig) -> Result<AttackOutcome, AttackError> {
    let e = cfg.base_epoch;
    let installed = fv(5, e - 10 * DAY, e + 365 * DAY);
    let mut out = AttackOutcome::new(ScenarioKind::Rollback);

    let older = session(
        cfg,
        fixture(cfg, installed, &[fv(4, e - 20 * DAY, e + 365 * DAY)])?,
        1,
        None,
    )?;
    let equal = session(cfg, fixture(cfg, installed, &[installed])?, 1, None)?;
    let newer = session(cfg, fixture(cfg, installed, &[fv(6, e - DAY, e + 365 * DAY)])?, 1, None)?;

    out.rejection_cause = first_cause(&older, 0);
    out.adversary_succeeded = accepted(&older, 0) || accepted(&equal, 0);
    out.control_accepted = accepted(&newer, 0);
    out.adversary_meter_ns = older.adversary_meter().total_ns();
    out.server_meter_ns = older.fds().meter().total_ns();
    out.detail("equal_revision_cause", cause_json(first_cause(&equal, 0)));
    Ok(out)
}

fn cause_json(c: Option<RejectCause>) -> Value {
    c.map_or(Value::Null, |c| c.name().into())
}

/// Rewrites the device key in the request so the server packs firmware for
/// another model; separately forwards one device's package to another.
pub fn run_mismatch_attack(cfg: &SimConfig) -> Result<AttackOutcome, AttackError> {
    let e = cfg.base_epoch;
    let other = DeviceKey {
        device_type: DEFAULT_DEVICE.device_type.wrapping_add(1),
        ..DEFAULT_DEVICE
    };
    let installed = fv(1, e - 60 * DAY, e + 365 * DAY);
    let served = [
        fv(2, e - DAY, e + 365 * DAY),
        FirmwareVersion::for_device(other, 7, e - DAY, e + 365 * DAY),
    ];
    let mut out = AttackOutcome::new(ScenarioKind::Mismatch);

    let rewrite = session(
        cfg,
        fixture(cfg, installed, &served)?,
        1,
        Some(Box::new(RewriteDeviceKey { to: other })),
    )?;
    let forward = session(
        cfg,
        fixture(cfg, installed, &served)?,
        2,
        Some(Box::new(Forward {
            from: ActorId::Ed(0),
            to: ActorId::Ed(1),
        })),
    )?;
    let ctl = session(cfg, fixture(cfg, installed, &served)?, 1, None)?;

    let forwarded: Vec<RejectCause> = forward
        .verdicts()
        .iter()
        .filter(|v| v.ed == 1)
        .filter_map(|v| v.verdict.cause())
        .collect();
    out.rejection_cause = first_cause(&rewrite, 0);
    out.adversary_succeeded = accepted(&rewrite, 0) || accepted(&forward, 0) || forwarded.is_empty();
    out.control_accepted = accepted(&ctl, 0);
    out.adversary_meter_ns = rewrite.adversary_meter().total_ns();
    out.server_meter_ns = rewrite.fds().meter().total_ns();
    out.detail(
        "forwarded_causes",
        forwarded.iter().map(|c| c.name()).collect::<Vec<_>>(),
    );
    out.detail("forwarded_target_own_accept", accepted(&forward, 1));
    Ok(out)
}

/// Replays an intermediate revision whose best-before date has passed, and
/// one that expires exactly now.
pub fn run_obsolete_attack(cfg: &SimConfig) -> Result<AttackOutcome, AttackError> {
    let e = cfg.base_epoch;
    let installed = fv(1, e - 60 * DAY, e + 365 * DAY);
    let mut out = AttackOutcome::new(ScenarioKind::Obsolete);

    let past = session(cfg, fixture(cfg, installed, &[fv(2, e - 30 * DAY, e - DAY)])?, 1, None)?;
    let boundary = session(cfg, fixture(cfg, installed, &[fv(2, e - 30 * DAY, e)])?, 1, None)?;
    let fresh = session(cfg, fixture(cfg, installed, &[fv(2, e - DAY, e + 365 * DAY)])?, 1, None)?;

    out.rejection_cause = first_cause(&past, 0);
    out.adversary_succeeded = accepted(&past, 0) || accepted(&boundary, 0);
    out.control_accepted = accepted(&fresh, 0);
    out.adversary_meter_ns = past.adversary_meter().total_ns();
    out.server_meter_ns = past.fds().meter().total_ns();
    out.detail("best_before_now_cause", cause_json(first_cause(&boundary, 0)));
    Ok(out)
}

/// An impersonator without the server's hardware recovers `I1` through the
/// public model. The device deadline is set to twice the honest round
/// trip. A second run hands the adversary the session key but delivers one
/// nanosecond after the deadline.
pub fn run_redirection_attack(cfg: &SimConfig) -> Result<AttackOutcome, AttackError> {
    let mut out = AttackOutcome::new(ScenarioKind::Redirect);
    let ctl = control(cfg)?;
    let server_ns = ctl.fds().meter().total_ns();
    let ctl_arrival = ctl
        .verdicts()
        .iter()
        .find(|v| v.ed == 0 && matches!(v.verdict, Verdict::Accept { .. }))
        .map(|v| v.arrived);
    let mut tuned = cfg.clone();
    tuned.ed.response_deadline_ns = 2 * ctl_arrival.unwrap_or(server_ns);
    out.control_accepted = ctl_arrival.is_some_and(|t| t <= tuned.ed.response_deadline_ns);

    let image = synthetic_image(cfg.derive_seed("malicious"), SCENARIO_IMAGE_LEN);
    let log = Rc::new(RefCell::new(RedirectLog::default()));
    let sim = session(
        &tuned,
        Fixture::standard(&tuned, SCENARIO_IMAGE_LEN),
        1,
        Some(Box::new(Redirect::new(image.clone(), log.clone()))),
    )?;
    let adv_ns = sim.adversary_meter().total_ns();
    let deadline = tuned.ed.response_deadline_ns;
    out.rejection_cause = first_cause(&sim, 0);
    out.adversary_succeeded = accepted(&sim, 0);
    out.adversary_meter_ns = adv_ns;
    out.server_meter_ns = server_ns;
    out.detail("deadline_ns", deadline);
    out.detail("adversary_over_deadline", adv_ns / deadline.max(1));
    out.detail("recovered_i1", log.borrow().recovered_i1.is_some());
    if let Some(t) = log.borrow().injected_at {
        out.detail("injected_at_ns", t);
    }

    // Reading I1 off the relayed challenge with a precomputed table skips
    // the model entirely.
    let costs = tuned.effective_costs();
    let n = tuned.ed.set_size as u64;
    let fds_model_cost = sim
        .ppmr()
        .models()
        .next()
        .map_or(costs.ppuf_sim, |m| m.simulation_cost_per_eval());
    let dictionary_route = (n + 2) * costs.hash
        + costs.small_cipher
        + fds_model_cost
        + 2 * costs.payload_cost(SCENARIO_IMAGE_LEN)
        + 2 * costs.kdf;
    out.detail("dictionary_route_ns", dictionary_route);
    out.detail("dictionary_route_within_deadline", dictionary_route <= deadline);

    let stolen = stolen_key_run(&tuned, image)?;
    out.detail("stolen_key_cause", cause_json(first_cause(&stolen, 0)));
    out.adversary_succeeded |= accepted(&stolen, 0);
    Ok(out)
}

fn stolen_key_run(cfg: &SimConfig, image: Vec<u8>) -> Result<Simulation, AttackError> {
    let mut sim = Simulation::new(cfg.clone(), Fixture::standard(cfg, SCENARIO_IMAGE_LEN), 1)?;
    sim.initiate(0)?;
    let p = *sim
        .ed(0)
        .pending()
        .ok_or_else(|| AttackError::Setup("no pending request".into()))?;
    let log = Rc::new(RefCell::new(RedirectLog::default()));
    let adv = Redirect::new(image, log).with_stolen_key(p.i1, p.timestamp, p.deadline + 1);
    sim.set_adversary(Box::new(adv));
    sim.run()?;
    Ok(sim)
}

/// Flips payload bits in flight and injects two more tampered copies, which
/// trips the failure cooldown. Also flips a response bit with and without
/// fixing the frame checksum.
pub fn run_tamper_attack(cfg: &SimConfig) -> Result<AttackOutcome, AttackError> {
    let mut out = AttackOutcome::new(ScenarioKind::Tamper);
    let copies = cfg.ed.failure_threshold.saturating_sub(1) as usize;
    let sim = session(
        cfg,
        Fixture::standard(cfg, SCENARIO_IMAGE_LEN),
        1,
        Some(Box::new(Tamper::new(copies))),
    )?;
    let raw_o2 = session(
        cfg,
        Fixture::standard(cfg, SCENARIO_IMAGE_LEN),
        1,
        Some(Box::new(FlipResponse::new(false))),
    )?;
    let fixed_o2 = session(
        cfg,
        Fixture::standard(cfg, SCENARIO_IMAGE_LEN),
        1,
        Some(Box::new(FlipResponse::new(true))),
    )?;
    let ctl = control(cfg)?;

    let causes: Vec<&str> = sim
        .verdicts()
        .iter()
        .filter_map(|v| v.verdict.cause())
        .map(|c| c.name())
        .collect();
    out.rejection_cause = first_cause(&sim, 0);
    out.adversary_succeeded = accepted(&sim, 0) || accepted(&raw_o2, 0) || accepted(&fixed_o2, 0);
    out.control_accepted = accepted(&ctl, 0);
    out.adversary_meter_ns = sim.adversary_meter().total_ns();
    out.server_meter_ns = sim.fds().meter().total_ns();
    out.detail("causes", causes);
    out.detail("cooldown_engaged", sim.ed(0).cooldown_active(sim.now()));
    out.detail("cooldown_until_ns", sim.ed(0).cooldown_until());
    out.detail("o2_flip_cause", cause_json(first_cause(&raw_o2, 0)));
    out.detail("o2_flip_rechecksummed_cause", cause_json(first_cause(&fixed_o2, 0)));
    Ok(out)
}

fn windows(b: &[u8]) -> HashSet<&[u8]> {
    b.windows(8).collect()
}

/// A passive observer records every frame of `trials` honest sessions and
/// looks for any 8-byte run of the firmware image in them. This is a
/// statistical smoke test, not a proof.
pub fn run_interception_analysis(cfg: &SimConfig, trials: usize) -> Result<AttackOutcome, AttackError> {
    let mut out = AttackOutcome::new(ScenarioKind::Intercept);
    let mut leaks = 0usize;
    let mut all_accepted = true;
    let mut first: Option<(Simulation, Vec<Envelope>)> = None;
    for t in 0..trials {
        let mut c = cfg.clone();
        c.seed = cfg.seed.wrapping_add(t as u64);
        c.ed.set_size = c.ed.set_size.min(INTERCEPT_SET_SIZE);
        let fx = Fixture::standard(&c, SCENARIO_IMAGE_LEN);
        let image = fx.repo.entries().next().expect("one entry").image.clone();
        let seen = Rc::new(RefCell::new(Vec::new()));
        let sim = session(&c, fx, 1, Some(Box::new(Eavesdrop { seen: seen.clone() })))?;
        all_accepted &= accepted(&sim, 0);
        let image_windows = windows(&image);
        leaks += seen
            .borrow()
            .iter()
            .filter(|env| env.bytes.windows(8).any(|w| image_windows.contains(w)))
            .count();
        if first.is_none() {
            let frames = seen.borrow().clone();
            first = Some((sim, frames));
        }
    }
    out.control_accepted = all_accepted && trials > 0;
    out.detail("trials", trials);
    out.detail("frames_with_common_8_byte_run", leaks);
    out.detail("kind", "statistical smoke test");

    let mut partial_read = false;
    if let Some((sim, frames)) = first {
        let (i2_only, both) = key_compromise(&sim, &frames);
        partial_read = i2_only;
        out.detail("i2_only_recovers_image", i2_only);
        out.detail("both_keys_recover_image", both);
        out.server_meter_ns = sim.fds().meter().total_ns();
    }

    // Without I1 or I2 the adversary must evaluate the model over the whole
    // challenge space.
    let costs = cfg.effective_costs();
    let brute = (BigInt::from(1) << 256u32) * BigInt::from(costs.hash + costs.ppuf_sim);
    out.detail("brute_force_ns", brute.to_string());
    out.detail(
        "brute_force_exceeds_deadline",
        brute > BigInt::from(cfg.ed.response_deadline_ns),
    );
    out.adversary_succeeded = leaks > 0 || partial_read;
    Ok(out)
}

/// Tries the captured package with `I2` alone, then with both keys.
fn key_compromise(sim: &Simulation, frames: &[Envelope]) -> (bool, bool) {
    let profile = sim.config().profile;
    let field = |event: &str, key: &str| {
        sim.trace()
            .find("fds", event)
            .find_map(|r| r.detail.get(key).and_then(Value::as_u64))
    };
    let (Some(i1), Some(ts), Some(i2)) = (
        field("recovered", "i1"),
        field("recovered", "timestamp"),
        field("package", "i2"),
    ) else {
        return (false, false);
    };
    let Some(fp) = frames.iter().find_map(|env| match wire::decode(&env.bytes) {
        Ok((_, Message::FirmwarePackage(fp))) => Some(fp),
        _ => None,
    }) else {
        return (false, false);
    };
    let image = sim.fds().repo().entries().next().map(|e| e.image.clone());
    let open = |sk: &crypto::SessionKey| -> bool {
        let Ok(inner) = crypto::decrypt(
            profile,
            &crypto::kdf_from_element(profile, i2),
            &fp.payload,
            &fp.nonce_outer,
        ) else {
            return false;
        };
        let Ok(plain) = crypto::decrypt(profile, sk, &inner, &fp.nonce_inner) else {
            return false;
        };
        wire::decode_inner(profile, &plain).is_ok_and(|(img, _)| Some(img) == image)
    };
    // best guess without I1: the outer key reused with the right timestamp
    let guess = crypto::derive_session_key(&crypto::kdf_from_element(profile, i2), ts);
    let real = crypto::derive_session_key(&crypto::kdf_from_element(profile, i1), ts);
    (open(&guess), open(&real))
}

/// Sizes a precomputed dictionary and prices filling it by pinging the
/// public model repository once per set element.
pub fn run_dictionary_analysis(cfg: &SimConfig) -> Result<AttackOutcome, AttackError> {
    let mut out = AttackOutcome::new(ScenarioKind::Dictionary);
    let report =
        dictionary_report(&BigRational::new(1.into(), 100.into())).map_err(|e| AttackError::Setup(e.to_string()))?;
    out.details.insert(
        "report".into(),
        serde_json::to_value(&report).expect("report serializes"),
    );

    let ctl = control(cfg)?;
    out.control_accepted = accepted(&ctl, 0);
    out.server_meter_ns = ctl.fds().meter().total_ns();

    let pings = cfg.ed.set_size as u64;
    let model = ctl
        .ppmr()
        .model(&ctl.fds().hw().instance_id())
        .map_err(|e| AttackError::Setup(e.to_string()))?;
    let mut meter = WorkMeter::new(cfg.effective_costs());
    ping_model(model, pings, cfg.derive_seed("pings"), &mut meter).map_err(|e| AttackError::Setup(e.to_string()))?;
    let per_eval = model.simulation_cost_per_eval();
    out.adversary_meter_ns = meter.total_ns();
    out.detail("pings", pings);
    out.detail("simulation_cost_per_eval_ns", per_eval);
    out.detail("pings_match_cost_model", meter.total_ns() == pings * per_eval);
    out.detail("probability_of_live_challenge", format!("{pings}/2^256"));
    Ok(out)
}

/// Evaluates `count` random challenges on `model`, charged as simulations.
pub fn ping_model(
    model: &crate::PublicModel,
    count: u64,
    seed: u64,
    meter: &mut WorkMeter,
) -> Result<(), crate::dppuf::DppufError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = model.width();
    let mut scratch = BatchScratch::default();
    let mut left = count;
    while left > 0 {
        let k = left.min(LANES as u64) as usize;
        let challenges: Vec<Challenge> = (0..k)
            .map(|_| {
                let bytes: Vec<u8> = (0..width.div_ceil(8)).map(|_| rng.gen()).collect();
                Challenge::from_leading_bits(width, &bytes)
            })
            .collect();
        model.respond_lanes(&challenges, &mut scratch)?;
        left -= k as u64;
    }
    meter.charge_at(WorkKind::PpufSim, count, model.simulation_cost_per_eval());
    Ok(())
}

/// Dictionary man in the middle. The device deadline is set to the honest
/// package's arrival; the adversary's extra work makes it late. The meters
/// are compared with the closed forms, and a second run shows what happens
/// under the configured deadline.
pub fn run_mitm_attack(cfg: &SimConfig) -> Result<AttackOutcome, AttackError> {
    let mut out = AttackOutcome::new(ScenarioKind::Mitm);
    let ctl = control(cfg)?;
    let arrival = ctl
        .verdicts()
        .iter()
        .find(|v| v.ed == 0 && matches!(v.verdict, Verdict::Accept { .. }))
        .map(|v| v.arrived);
    out.control_accepted = arrival.is_some();
    let mut tight = cfg.clone();
    tight.ed.response_deadline_ns = arrival.unwrap_or(cfg.ed.response_deadline_ns);

    let image = synthetic_image(cfg.derive_seed("malicious"), SCENARIO_IMAGE_LEN);
    let (sim, log) = mitm_run(&tight, &image)?;
    out.rejection_cause = first_cause(&sim, 0);
    out.adversary_succeeded = accepted(&sim, 0);
    out.adversary_meter_ns = sim.adversary_meter().crypto_ns();
    out.server_meter_ns = sim.fds().meter().crypto_ns();

    let costs = cfg.effective_costs();
    let race = mitm_race_analysis(RaceCosts {
        t_hash: costs.hash,
        t_dec1: costs.small_cipher,
        t_dec2: costs.payload_cost(SCENARIO_IMAGE_LEN),
        n: cfg.ed.set_size as u64,
    })
    .map_err(|e| AttackError::Setup(e.to_string()))?;
    out.detail("deadline_ns", tight.ed.response_deadline_ns);
    out.detail("closed_form_attacker_ns", race.attacker_time as u64);
    out.detail("closed_form_server_ns", race.server_time as u64);
    out.detail(
        "meters_match_closed_form",
        out.adversary_meter_ns as u128 == race.attacker_time && out.server_meter_ns as u128 == race.server_time,
    );
    out.detail("swapped_image", log.swapped);
    out.detail("adversary_delay_ns", log.delay_ns);

    let (loose, _) = mitm_run(cfg, &image)?;
    out.detail("accepted_under_configured_deadline", accepted(&loose, 0));
    out.detail("configured_deadline_ns", cfg.ed.response_deadline_ns);
    Ok(out)
}

fn mitm_run(cfg: &SimConfig, image: &[u8]) -> Result<(Simulation, MitmLog), AttackError> {
    let log = Rc::new(RefCell::new(MitmLog::default()));
    let sim = session(
        cfg,
        Fixture::standard(cfg, SCENARIO_IMAGE_LEN),
        1,
        Some(Box::new(Mitm::new(image.to_vec(), log.clone()))),
    )?;
    let l = log.borrow().clone();
    Ok((sim, l))
}

/// Runs every scenario in order.
pub fn run_all(cfg: &SimConfig) -> Result<Vec<AttackOutcome>, AttackError> {
    ScenarioKind::ALL.into_iter().map(|k| run_scenario(k, cfg)).collect()
}

/// Fields of an outcome as a JSON object, for line-oriented output.
pub fn outcome_json(o: &AttackOutcome) -> Value {
    json!(o)
}
