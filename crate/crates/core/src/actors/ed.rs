//! The embedded device.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{epoch_at, finish, Outbound, RejectCause};
use crate::channel::{ActorId, CostTable, Envelope, Trace, VirtualTime, WorkKind, WorkMeter, NS_PER_SEC};
use crate::crypto::{self, CryptoProfile, Nonce};
use crate::dppuf::{challenge_for_element, search_preimage, NoiseSpec, SearchOptions, SetDescriptor};
use crate::wire::{self, FirmwareVersion, InstanceId, Message, RelayRequest};
use crate::Dppuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdConfig {
    /// Time allowed between issuing a request and the package arriving.
    pub response_deadline_ns: u64,
    pub failure_threshold: u32,
    pub failure_window_ns: u64,
    pub cooldown_ns: u64,
    pub set_size: u32,
}

impl Default for EdConfig {
    fn default() -> Self {
        Self {
            response_deadline_ns: 10_000_000,
            failure_threshold: 3,
            failure_window_ns: 60 * NS_PER_SEC,
            cooldown_ns: 3600 * NS_PER_SEC,
            set_size: 1_000_000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EdError {
    #[error("updates disabled until t={until}ns")]
    CooldownActive { until: VirtualTime },
    #[error("a request is already pending")]
    AlreadyPending,
    #[error("invalid set size {0}")]
    SetSize(u32),
}

/// The single outstanding request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pending {
    pub request: u64,
    pub set: SetDescriptor,
    pub i1: u64,
    pub timestamp: u64,
    pub issued_at: VirtualTime,
    pub deadline: VirtualTime,
    /// The deadline passed without an accepted package.
    pub expired: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Accept { fv: FirmwareVersion, image: Vec<u8> },
    Reject(RejectCause),
}

impl Verdict {
    pub fn cause(&self) -> Option<RejectCause> {
        match self {
            Verdict::Accept { .. } => None,
            Verdict::Reject(c) => Some(*c),
        }
    }
}

pub struct Ed {
    index: u16,
    hw: Dppuf,
    profile: CryptoProfile,
    config: EdConfig,
    fds_id: InstanceId,
    base_epoch: u64,
    installed: FirmwareVersion,
    image: Option<Vec<u8>>,
    search: SearchOptions,
    noise_flips: usize,
    pending: Option<Pending>,
    next_request: u64,
    failures: VecDeque<(VirtualTime, RejectCause)>,
    cooldown_until: Option<VirtualTime>,
    rng: ChaCha8Rng,
    meter: WorkMeter,
    busy_until: VirtualTime,
}

impl Ed {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        index: u16,
        hw: Dppuf,
        profile: CryptoProfile,
        config: EdConfig,
        fds_id: InstanceId,
        installed: FirmwareVersion,
        costs: CostTable,
        base_epoch: u64,
        search: SearchOptions,
        noise_flips: usize,
        rng: ChaCha8Rng,
    ) -> Self {
        Self {
            index,
            hw,
            profile,
            config,
            fds_id,
            base_epoch,
            installed,
            image: None,
            search,
            noise_flips,
            pending: None,
            next_request: 0,
            failures: VecDeque::new(),
            cooldown_until: None,
            rng,
            meter: WorkMeter::new(costs),
            busy_until: 0,
        }
    }

    pub fn id(&self) -> ActorId {
        ActorId::Ed(self.index)
    }

    pub fn instance_id(&self) -> InstanceId {
        self.hw.instance_id()
    }

    pub fn hw(&self) -> &Dppuf {
        &self.hw
    }

    pub fn config(&self) -> &EdConfig {
        &self.config
    }

    pub fn installed(&self) -> &FirmwareVersion {
        &self.installed
    }

    /// The last accepted image.
    pub fn image(&self) -> Option<&[u8]> {
        self.image.as_deref()
    }

    pub fn pending(&self) -> Option<&Pending> {
        self.pending.as_ref()
    }

    pub fn meter(&self) -> &WorkMeter {
        &self.meter
    }

    pub fn failures(&self) -> impl Iterator<Item = &(VirtualTime, RejectCause)> {
        self.failures.iter()
    }

    pub fn cooldown_until(&self) -> Option<VirtualTime> {
        self.cooldown_until
    }

    pub fn cooldown_active(&self, now: VirtualTime) -> bool {
        self.cooldown_until.is_some_and(|t| now < t)
    }

    /// Draws a fresh set and element, encrypts the current epoch under the
    /// element key and addresses the request to the repository. A pending
    /// request that has already expired is replaced.
    pub fn initiate(&mut self, now: VirtualTime, trace: &mut Trace) -> Result<Outbound, EdError> {
        if let Some(until) = self.cooldown_until.filter(|&t| now < t) {
            trace
                .push(now, self.id().to_string(), "refuse")
                .cause("cooldown_active");
            return Err(EdError::CooldownActive { until });
        }
        if self.pending.is_some_and(|p| !p.expired) {
            return Err(EdError::AlreadyPending);
        }
        let n = self.config.set_size;
        let start = self.rng.gen_range(0..=u64::MAX - n as u64);
        let set = SetDescriptor::new(start, n).map_err(|_| EdError::SetSize(n))?;
        let i1 = start + self.rng.gen_range(0..n as u64);
        let nonce = Nonce(self.rng.gen());
        let before = self.meter.total_ns();
        let timestamp = epoch_at(self.base_epoch, now);
        let challenge = challenge_for_element(self.profile, i1, self.hw.width());
        self.meter.charge(WorkKind::Hash, 1);
        let key = crypto::kdf_from_element(self.profile, i1);
        self.meter.charge(WorkKind::Overhead, 1);
        let encrypted_timestamp = crypto::encrypt(self.profile, &key, &crypto::timestamp_block(timestamp), &nonce);
        self.meter.charge(WorkKind::Enc, 1);
        let req = RelayRequest {
            fds_id: self.fds_id,
            ed_id: self.instance_id(),
            device_key: self.installed.device_key(),
            set,
            nonce,
            encrypted_timestamp,
            challenge,
        };
        let bytes = wire::encode(self.profile, &Message::Relay(req));
        self.meter.charge_checksum(bytes.len());
        let at = finish(&mut self.busy_until, now, before, &self.meter);
        let request = self.next_request;
        self.next_request += 1;
        self.pending = Some(Pending {
            request,
            set,
            i1,
            timestamp,
            issued_at: at,
            deadline: at + self.config.response_deadline_ns,
            expired: false,
        });
        trace
            .push(at, self.id().to_string(), "request")
            .with("request", request)
            .with("set_start", start)
            .with("set_size", n as u64)
            .with("timestamp", timestamp)
            .with("deadline", at + self.config.response_deadline_ns);
        Ok(Outbound {
            at,
            to: ActorId::Ppmr,
            bytes,
        })
    }

    /// Marks request `request` expired if it is still open.
    pub fn on_deadline(&mut self, now: VirtualTime, request: u64, trace: &mut Trace) {
        if let Some(p) = self.pending.as_mut().filter(|p| p.request == request && !p.expired) {
            p.expired = true;
            trace
                .push(now, self.id().to_string(), "timeout")
                .cause("late")
                .with("request", request);
            self.record_failure(now, RejectCause::Late, trace);
        }
    }

    /// Runs the package checks in order. The verdict is reached at the
    /// returned time; rejections count towards the cooldown.
    pub fn receive(&mut self, now: VirtualTime, env: &Envelope, trace: &mut Trace) -> (VirtualTime, Verdict) {
        let before = self.meter.total_ns();
        let verdict = self.verify(now, &env.bytes);
        let done = finish(&mut self.busy_until, now, before, &self.meter);
        let who = self.id().to_string();
        match &verdict {
            Verdict::Accept { fv, image } => {
                trace
                    .push(done, who, "accept")
                    .with("arrived", now)
                    .with("sw_revision", fv.sw_revision as u64)
                    .with("release_ts", fv.release_ts)
                    .with("image_bytes", image.len() as u64);
            }
            Verdict::Reject(cause) => {
                trace.push(done, who, "reject").cause(cause.name()).with("arrived", now);
                if *cause != RejectCause::CooldownActive {
                    self.record_failure(done, *cause, trace);
                }
            }
        }
        (done, verdict)
    }

    fn verify(&mut self, now: VirtualTime, bytes: &[u8]) -> Verdict {
        use RejectCause::*;
        if self.cooldown_active(now) {
            return Verdict::Reject(CooldownActive);
        }
        let Some(p) = self.pending else {
            return Verdict::Reject(NoPending);
        };
        if p.expired || now > p.deadline {
            return Verdict::Reject(Late);
        }
        self.meter.charge_checksum(bytes.len());
        let fp = match wire::decode_as(self.profile, bytes) {
            Ok(Message::FirmwarePackage(fp)) => fp,
            _ => return Verdict::Reject(Corrupt),
        };
        let mut options = self.search.clone();
        if self.noise_flips > 0 {
            options.noise = Some(NoiseSpec {
                flips: self.noise_flips,
                seed: self.rng.gen(),
            });
        }
        let Ok(hit) = search_preimage(&self.hw, &p.set, &fp.o2, self.profile, &mut self.meter, &options) else {
            return Verdict::Reject(Forged);
        };
        let outer_key = crypto::kdf_from_element(self.profile, hit.element);
        let sk = crypto::derive_session_key(&crypto::kdf_from_element(self.profile, p.i1), p.timestamp);
        self.meter.charge(WorkKind::Overhead, 2);
        self.meter.charge_payload(WorkKind::Dec, fp.payload.len());
        let Ok(inner) = crypto::decrypt(self.profile, &outer_key, &fp.payload, &fp.nonce_outer) else {
            return Verdict::Reject(KeyMismatch);
        };
        self.meter.charge_payload(WorkKind::Dec, inner.len());
        let Ok(plain) = crypto::decrypt(self.profile, &sk, &inner, &fp.nonce_inner) else {
            return Verdict::Reject(KeyMismatch);
        };
        self.meter.charge_checksum(plain.len());
        let Ok((image, fv)) = wire::decode_inner(self.profile, &plain) else {
            return Verdict::Reject(KeyMismatch);
        };
        if fv.device_key() != self.installed.device_key() {
            return Verdict::Reject(Mismatch);
        }
        if fv.best_before <= epoch_at(self.base_epoch, now) {
            return Verdict::Reject(Expired);
        }
        if fv.release_ts <= self.installed.release_ts || fv.sw_revision <= self.installed.sw_revision {
            return Verdict::Reject(Rollback);
        }
        self.installed = fv;
        self.image = Some(image.clone());
        self.pending = None;
        Verdict::Accept { fv, image }
    }

    /// Logs a failure and engages the cooldown once enough land inside
    /// the window.
    pub fn record_failure(&mut self, now: VirtualTime, cause: RejectCause, trace: &mut Trace) {
        self.failures.push_back((now, cause));
        let horizon = now.saturating_sub(self.config.failure_window_ns);
        while self.failures.front().is_some_and(|&(t, _)| t < horizon) {
            self.failures.pop_front();
        }
        if self.failures.len() >= self.config.failure_threshold as usize && !self.cooldown_active(now) {
            let until = now + self.config.cooldown_ns;
            self.cooldown_until = Some(until);
            self.failures.clear();
            trace
                .push(now, self.id().to_string(), "cooldown")
                .cause(cause.name())
                .with("until", until);
        }
    }
}
