//! The firmware distribution server.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{epoch_at, finish, Outbound};
use crate::channel::{ActorId, CostTable, Envelope, Trace, VirtualTime, WorkKind, WorkMeter};
use crate::crypto::{self, CryptoProfile, Nonce, KEY_BYTES};
use crate::dppuf::{challenge_for_element, search_preimage, NoiseSpec, SearchOptions};
use crate::wire::{self, DeviceKey, FirmwarePackage, FirmwareVersion, InstanceId, Message, ModelQuery, UpdateRequest};
use crate::Dppuf;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RepoError {
    #[error("revision {got} is not newer than stored revision {have}")]
    NotNewer { have: u32, got: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirmwareEntry {
    pub fv: FirmwareVersion,
    pub image: Vec<u8>,
}

/// Latest image per device key.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FirmwareRepo {
    latest: BTreeMap<DeviceKey, FirmwareEntry>,
}

impl FirmwareRepo {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `entry`, which must carry a higher software revision than
    /// anything already held for its device key.
    pub fn insert(&mut self, entry: FirmwareEntry) -> Result<(), RepoError> {
        let key = entry.fv.device_key();
        if let Some(old) = self.latest.get(&key) {
            if entry.fv.sw_revision <= old.fv.sw_revision {
                return Err(RepoError::NotNewer {
                    have: old.fv.sw_revision,
                    got: entry.fv.sw_revision,
                });
            }
        }
        self.latest.insert(key, entry);
        Ok(())
    }

    pub fn get(&self, key: &DeviceKey) -> Option<&FirmwareEntry> {
        self.latest.get(key)
    }

    pub fn entries(&self) -> impl Iterator<Item = &FirmwareEntry> {
        self.latest.values()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdsConfig {
    /// Accepted distance between a request timestamp and the server clock.
    pub timestamp_window_s: u64,
}

impl Default for FdsConfig {
    fn default() -> Self {
        Self {
            timestamp_window_s: 300,
        }
    }
}

/// A package waiting for the device model's answer.
#[derive(Debug, Clone)]
struct Job {
    to: ActorId,
    i2: u64,
    nonce_outer: Nonce,
    nonce_inner: Nonce,
    inner: Vec<u8>,
}

pub struct Fds {
    hw: Dppuf,
    profile: CryptoProfile,
    config: FdsConfig,
    repo: FirmwareRepo,
    base_epoch: u64,
    search: SearchOptions,
    noise_flips: usize,
    addresses: BTreeMap<InstanceId, ActorId>,
    jobs: BTreeMap<u64, Job>,
    next_job: u64,
    rng: ChaCha8Rng,
    meter: WorkMeter,
    busy_until: VirtualTime,
}

/// What the server recovered from a request, exposed for tracing and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recovered {
    pub i1: u64,
    pub timestamp: u64,
}

impl Fds {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        hw: Dppuf,
        profile: CryptoProfile,
        config: FdsConfig,
        repo: FirmwareRepo,
        costs: CostTable,
        base_epoch: u64,
        search: SearchOptions,
        noise_flips: usize,
        rng: ChaCha8Rng,
    ) -> Self {
        Self {
            hw,
            profile,
            config,
            repo,
            base_epoch,
            search,
            noise_flips,
            addresses: BTreeMap::new(),
            jobs: BTreeMap::new(),
            next_job: 0,
            rng,
            meter: WorkMeter::new(costs),
            busy_until: 0,
        }
    }

    pub fn hw(&self) -> &Dppuf {
        &self.hw
    }

    pub fn repo(&self) -> &FirmwareRepo {
        &self.repo
    }

    pub fn meter(&self) -> &WorkMeter {
        &self.meter
    }

    /// Where packages for `ed` are delivered.
    pub fn register_address(&mut self, ed: InstanceId, addr: ActorId) {
        self.addresses.insert(ed, addr);
    }

    pub fn handle(&mut self, now: VirtualTime, env: &Envelope, trace: &mut Trace) -> Vec<Outbound> {
        let before = self.meter.total_ns();
        self.meter.charge_checksum(env.bytes.len());
        let msg = wire::decode_as(self.profile, &env.bytes);
        let out = match msg {
            Ok(Message::UpdateRequest(req)) => self.on_request(now, req, trace),
            Ok(Message::ModelResponse(r)) => self.on_model_response(r.correlation, r.response, trace, now),
            Ok(other) => Err(("unexpected", other.kind().name().to_string())),
            Err(e) => Err(("corrupt", e.to_string())),
        };
        let out = out.map(|(to, m)| {
            let bytes = wire::encode(self.profile, &m);
            self.meter.charge_checksum(bytes.len());
            (to, m, bytes)
        });
        let at = finish(&mut self.busy_until, now, before, &self.meter);
        match out {
            Ok((to, m, bytes)) => {
                trace
                    .push(at, "fds", "send")
                    .with("kind", m.kind().name())
                    .with("to", to.to_string());
                vec![Outbound { at, to, bytes }]
            }
            Err((cause, detail)) => {
                trace.push(at, "fds", "drop").cause(cause).with("detail", detail);
                Vec::new()
            }
        }
    }

    fn noisy_options(&mut self) -> SearchOptions {
        let mut o = self.search.clone();
        if self.noise_flips > 0 {
            o.noise = Some(NoiseSpec {
                flips: self.noise_flips,
                seed: self.rng.gen(),
            });
        }
        o
    }

    /// Searches the set for `I1`, opens the timestamp and prepares the
    /// inner layer, then asks the repository to challenge the device model.
    pub fn recover(&mut self, now: VirtualTime, req: &UpdateRequest) -> Result<Recovered, (&'static str, String)> {
        let options = self.noisy_options();
        let hit = search_preimage(&self.hw, &req.set, &req.o1, self.profile, &mut self.meter, &options)
            .map_err(|e| ("preimage", e.to_string()))?;
        let key = crypto::kdf_from_element(self.profile, hit.element);
        self.meter.charge(WorkKind::Overhead, 1);
        self.meter.charge(WorkKind::Dec, 1);
        let block = crypto::decrypt(self.profile, &key, &req.encrypted_timestamp, &req.nonce)
            .map_err(|e| ("timestamp", e.to_string()))?;
        if block.len() != KEY_BYTES || block[8..].iter().any(|&b| b != 0) {
            return Err(("timestamp", "malformed timestamp block".into()));
        }
        let timestamp = u64::from_le_bytes(block[..8].try_into().unwrap());
        let server = epoch_at(self.base_epoch, now);
        if server.abs_diff(timestamp) > self.config.timestamp_window_s {
            return Err(("implausible_timestamp", format!("{timestamp} vs server {server}")));
        }
        Ok(Recovered {
            i1: hit.element,
            timestamp,
        })
    }

    fn on_request(
        &mut self,
        now: VirtualTime,
        req: UpdateRequest,
        trace: &mut Trace,
    ) -> Result<(ActorId, Message), (&'static str, String)> {
        let to = *self
            .addresses
            .get(&req.ed_id)
            .ok_or(("unknown_device", hex::encode(req.ed_id)))?;
        let rec = self.recover(now, &req)?;
        trace
            .push(now, "fds", "recovered")
            .with("i1", rec.i1)
            .with("timestamp", rec.timestamp);
        let entry = self
            .repo
            .get(&req.device_key)
            .ok_or(("no_firmware", format!("{:?}", req.device_key)))?;
        let sk = crypto::derive_session_key(&crypto::kdf_from_element(self.profile, rec.i1), rec.timestamp);
        let plain = wire::encode_inner(self.profile, &entry.image, &entry.fv);
        self.meter.charge_checksum(plain.len());
        let nonce_inner = Nonce(self.rng.gen());
        let nonce_outer = Nonce(self.rng.gen());
        let inner = crypto::encrypt(self.profile, &sk, &plain, &nonce_inner);
        self.meter.charge_payload(WorkKind::Enc, plain.len());

        let i2 = req.set.start + self.rng.gen_range(0..req.set.size as u64);
        let challenge = challenge_for_element(self.profile, i2, self.hw.width());
        self.meter.charge(WorkKind::Hash, 1);
        let correlation = self.next_job;
        self.next_job += 1;
        self.jobs.insert(
            correlation,
            Job {
                to,
                i2,
                nonce_outer,
                nonce_inner,
                inner,
            },
        );
        let q = ModelQuery {
            correlation,
            instance_id: req.ed_id,
            challenge,
        };
        Ok((ActorId::Ppmr, Message::ModelQuery(q)))
    }

    fn on_model_response(
        &mut self,
        correlation: u64,
        o2: crate::bits::Response,
        trace: &mut Trace,
        now: VirtualTime,
    ) -> Result<(ActorId, Message), (&'static str, String)> {
        let job = self
            .jobs
            .remove(&correlation)
            .ok_or(("unknown_correlation", correlation.to_string()))?;
        let key = crypto::kdf_from_element(self.profile, job.i2);
        self.meter.charge(WorkKind::Overhead, 1);
        let payload = crypto::encrypt(self.profile, &key, &job.inner, &job.nonce_outer);
        self.meter.charge_payload(WorkKind::Enc, job.inner.len());
        trace
            .push(now, "fds", "package")
            .with("i2", job.i2)
            .with("bytes", payload.len() as u64);
        let fp = FirmwarePackage {
            o2,
            nonce_outer: job.nonce_outer,
            nonce_inner: job.nonce_inner,
            payload,
        };
        Ok((job.to, Message::FirmwarePackage(fp)))
    }
}
