//! Network adversaries used by the scenario drivers.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::bits::Challenge;
use crate::channel::{ActorId, Adversary, AdversaryCtx, Envelope, VirtualTime, WorkKind, WorkMeter};
use crate::crypto::{self, CryptoProfile, Nonce, SessionKey};
use crate::dppuf::{challenge_for_element, search_preimage, SearchOptions, SetDescriptor};
use crate::wire::{self, DeviceKey, FirmwarePackage, FirmwareVersion, Message, MessageKind, RelayRequest};

fn kind(env: &Envelope) -> Option<MessageKind> {
    wire::peek_header(&env.bytes).ok().map(|h| h.kind)
}

/// The adversary's own work serializes like an actor's.
#[derive(Debug, Default)]
struct Busy(VirtualTime);

impl Busy {
    fn done(&mut self, now: VirtualTime, before: u64, meter: &WorkMeter) -> VirtualTime {
        let t = now.max(self.0) + (meter.total_ns() - before);
        self.0 = t;
        t
    }
}

/// Flips one payload bit of the first package and injects `copies` more
/// packages, each with a different bit flipped.
pub struct Tamper {
    pub copies: usize,
    done: bool,
}

impl Tamper {
    pub fn new(copies: usize) -> Self {
        Self { copies, done: false }
    }
}

/// Flips bit `bit` counted from the middle of the frame, inside the payload.
fn flip(bytes: &[u8], bit: usize) -> Vec<u8> {
    let mut v = bytes.to_vec();
    let at = v.len() / 2 + bit / 8;
    v[at] ^= 1 << (bit % 8);
    v
}

impl Adversary for Tamper {
    fn modify(&mut self, env: Envelope, ctx: &mut AdversaryCtx<'_>) -> Envelope {
        if self.done || kind(&env) != Some(MessageKind::FirmwarePackage) {
            return env;
        }
        self.done = true;
        for c in 0..self.copies {
            ctx.inject(ctx.now, env.from, env.to, flip(&env.bytes, 8 * (c + 1) + 3));
        }
        Envelope {
            bytes: flip(&env.bytes, 3),
            ..env
        }
    }
}

/// Flips one bit of `o2` in the first package. With `fix_checksum` the
/// frame is re-encoded so only the response is wrong.
pub struct FlipResponse {
    pub fix_checksum: bool,
    done: bool,
}

impl FlipResponse {
    pub fn new(fix_checksum: bool) -> Self {
        Self {
            fix_checksum,
            done: false,
        }
    }
}

impl Adversary for FlipResponse {
    fn modify(&mut self, env: Envelope, ctx: &mut AdversaryCtx<'_>) -> Envelope {
        if self.done {
            return env;
        }
        let Ok((profile, Message::FirmwarePackage(mut fp))) = wire::decode(&env.bytes) else {
            return env;
        };
        self.done = true;
        if !self.fix_checksum {
            // first o2 byte follows the header and its 2-byte length
            let mut bytes = env.bytes.clone();
            bytes[wire::HEADER_LEN + 2] ^= 1;
            return Envelope { bytes, ..env };
        }
        fp.o2.flip(0);
        let bytes = wire::encode(profile, &Message::FirmwarePackage(fp));
        ctx.meter.charge_checksum(bytes.len());
        Envelope { bytes, ..env }
    }
}

/// Rewrites the device key of update requests in flight, fixing up the
/// unkeyed frame checksum.
pub struct RewriteDeviceKey {
    pub to: DeviceKey,
}

impl Adversary for RewriteDeviceKey {
    fn modify(&mut self, env: Envelope, ctx: &mut AdversaryCtx<'_>) -> Envelope {
        let Ok((profile, Message::UpdateRequest(mut req))) = wire::decode(&env.bytes) else {
            return env;
        };
        req.device_key = self.to;
        let bytes = wire::encode(profile, &Message::UpdateRequest(req));
        ctx.meter.charge_checksum(bytes.len());
        Envelope { bytes, ..env }
    }
}

/// Delivers packages meant for one device to another.
pub struct Forward {
    pub from: ActorId,
    pub to: ActorId,
}

impl Adversary for Forward {
    fn modify(&mut self, env: Envelope, _: &mut AdversaryCtx<'_>) -> Envelope {
        if env.to == self.from && kind(&env) == Some(MessageKind::FirmwarePackage) {
            Envelope { to: self.to, ..env }
        } else {
            env
        }
    }
}

/// Shared record of what a redirecting adversary achieved.
#[derive(Debug, Default, Clone)]
pub struct RedirectLog {
    pub recovered_i1: Option<u64>,
    pub injected_at: Option<VirtualTime>,
    pub work_ns: u64,
}

/// Impersonates the server: swallows the forwarded request, recovers `I1`
/// by simulating the server's public model over the whole set, and sends
/// its own package. With `stolen` keys the search is skipped and the
/// package is held until `hold_until`.
pub struct Redirect {
    pub image: Vec<u8>,
    pub stolen: Option<(u64, u64)>,
    pub hold_until: VirtualTime,
    pub log: Rc<RefCell<RedirectLog>>,
    relay: Option<(ActorId, RelayRequest)>,
    busy: Busy,
}

impl Redirect {
    pub fn new(image: Vec<u8>, log: Rc<RefCell<RedirectLog>>) -> Self {
        Self {
            image,
            stolen: None,
            hold_until: 0,
            log,
            relay: None,
            busy: Busy::default(),
        }
    }

    pub fn with_stolen_key(mut self, i1: u64, timestamp: u64, hold_until: VirtualTime) -> Self {
        self.stolen = Some((i1, timestamp));
        self.hold_until = hold_until;
        self
    }

    fn forge(
        &mut self,
        profile: CryptoProfile,
        o1: &crate::bits::Response,
        ctx: &mut AdversaryCtx<'_>,
    ) -> Option<(ActorId, Vec<u8>)> {
        let (ed, relay) = self.relay.clone()?;
        let (i1, timestamp) = match self.stolen {
            Some(k) => k,
            None => {
                let model = ctx.models.model(&relay.fds_id)?;
                let hit = search_preimage(model, &relay.set, o1, profile, ctx.meter, &SearchOptions::default()).ok()?;
                let key = crypto::kdf_from_element(profile, hit.element);
                ctx.meter.charge(WorkKind::Overhead, 1);
                ctx.meter.charge(WorkKind::Dec, 1);
                let block = crypto::decrypt(profile, &key, &relay.encrypted_timestamp, &relay.nonce).ok()?;
                (hit.element, u64::from_le_bytes(block[..8].try_into().ok()?))
            }
        };
        self.log.borrow_mut().recovered_i1 = Some(i1);
        let sk = crypto::derive_session_key(&crypto::kdf_from_element(profile, i1), timestamp);
        let fv = FirmwareVersion::for_device(relay.device_key, u32::MAX, timestamp, timestamp + 10 * 365 * 86_400);
        let i2 = relay.set.start;
        let challenge = challenge_for_element(profile, i2, relay.challenge.len());
        ctx.meter.charge(WorkKind::Hash, 1);
        let o2 = ctx.models.challenge_model(&relay.ed_id, &challenge, ctx.meter)?;
        Some((ed, seal(profile, &sk, i2, o2, &self.image, &fv, ctx.meter)))
    }
}

/// Builds a complete package frame the way the server does.
fn seal(
    profile: CryptoProfile,
    sk: &SessionKey,
    i2: u64,
    o2: crate::bits::Response,
    image: &[u8],
    fv: &FirmwareVersion,
    meter: &mut WorkMeter,
) -> Vec<u8> {
    let plain = wire::encode_inner(profile, image, fv);
    meter.charge_checksum(plain.len());
    let (nonce_inner, nonce_outer) = (Nonce([0xa5; 12]), Nonce([0x5a; 12]));
    let inner = crypto::encrypt(profile, sk, &plain, &nonce_inner);
    meter.charge_payload(WorkKind::Enc, plain.len());
    let payload = crypto::encrypt(profile, &crypto::kdf_from_element(profile, i2), &inner, &nonce_outer);
    meter.charge(WorkKind::Overhead, 1);
    meter.charge_payload(WorkKind::Enc, inner.len());
    let bytes = wire::encode(
        profile,
        &Message::FirmwarePackage(FirmwarePackage {
            o2,
            nonce_outer,
            nonce_inner,
            payload,
        }),
    );
    meter.charge_checksum(bytes.len());
    bytes
}

impl Adversary for Redirect {
    fn observe(&mut self, env: &Envelope, _: &mut AdversaryCtx<'_>) {
        if let Ok((_, Message::Relay(r))) = wire::decode(&env.bytes) {
            self.relay = Some((env.from, r));
        }
    }

    fn drop_message(&mut self, env: &Envelope, ctx: &mut AdversaryCtx<'_>) -> bool {
        let Ok((profile, Message::UpdateRequest(req))) = wire::decode(&env.bytes) else {
            return false;
        };
        let before = ctx.meter.total_ns();
        if let Some((ed, bytes)) = self.forge(profile, &req.o1, ctx) {
            let done = self.busy.done(ctx.now, before, ctx.meter);
            let at = done.max(self.hold_until);
            let mut log = self.log.borrow_mut();
            log.injected_at = Some(at);
            log.work_ns = done - ctx.now;
            drop(log);
            ctx.inject(at, ActorId::Fds, ed, bytes);
        }
        true
    }
}

/// Records every frame it sees.
pub struct Eavesdrop {
    pub seen: Rc<RefCell<Vec<Envelope>>>,
}

impl Adversary for Eavesdrop {
    fn observe(&mut self, env: &Envelope, _: &mut AdversaryCtx<'_>) {
        self.seen.borrow_mut().push(env.clone());
    }
}

#[derive(Debug, Default, Clone)]
pub struct MitmLog {
    pub i1: Option<u64>,
    pub i2: Option<u64>,
    pub swapped: bool,
    pub delay_ns: u64,
}

/// Dictionary man in the middle: hashes the whole set once, reads `I1` and
/// `I2` off the challenges in flight, then re-encrypts the package around
/// its own image.
pub struct Mitm {
    pub image: Vec<u8>,
    pub log: Rc<RefCell<MitmLog>>,
    dict: HashMap<[u8; 16], u64>,
    profile: Option<CryptoProfile>,
    sk: Option<SessionKey>,
    busy: Busy,
    pending_delay: u64,
}

fn dict_key(c: &Challenge) -> [u8; 16] {
    let mut k = [0u8; 16];
    let b = c.as_bytes();
    let n = b.len().min(16);
    k[..n].copy_from_slice(&b[..n]);
    k
}

impl Mitm {
    pub fn new(image: Vec<u8>, log: Rc<RefCell<MitmLog>>) -> Self {
        Self {
            image,
            log,
            dict: HashMap::new(),
            profile: None,
            sk: None,
            busy: Busy::default(),
            pending_delay: 0,
        }
    }

    fn build_dictionary(&mut self, profile: CryptoProfile, set: &SetDescriptor, width: usize, meter: &mut WorkMeter) {
        self.dict = set
            .iter()
            .map(|e| (dict_key(&challenge_for_element(profile, e, width)), e))
            .collect();
        meter.charge(WorkKind::Hash, set.size as u64);
    }

    fn lookup(&self, c: &Challenge, meter: &mut WorkMeter) -> Option<u64> {
        meter.charge(WorkKind::Hash, 1);
        self.dict.get(&dict_key(c)).copied()
    }
}

impl Adversary for Mitm {
    fn observe(&mut self, env: &Envelope, ctx: &mut AdversaryCtx<'_>) {
        let before = ctx.meter.total_ns();
        match wire::decode(&env.bytes) {
            Ok((profile, Message::Relay(r))) => {
                self.profile = Some(profile);
                self.build_dictionary(profile, &r.set, r.challenge.len(), ctx.meter);
                let Some(i1) = self.lookup(&r.challenge, ctx.meter) else {
                    return;
                };
                let key = crypto::kdf_from_element(profile, i1);
                ctx.meter.charge(WorkKind::Overhead, 1);
                ctx.meter.charge(WorkKind::Dec, 1);
                if let Ok(block) = crypto::decrypt(profile, &key, &r.encrypted_timestamp, &r.nonce) {
                    let ts = u64::from_le_bytes(block[..8].try_into().unwrap());
                    self.sk = Some(crypto::derive_session_key(&key, ts));
                    self.log.borrow_mut().i1 = Some(i1);
                }
            }
            Ok((_, Message::ModelQuery(q))) if !self.dict.is_empty() => {
                self.log.borrow_mut().i2 = self.lookup(&q.challenge, ctx.meter);
            }
            _ => return,
        }
        self.busy.done(ctx.now, before, ctx.meter);
    }

    fn modify(&mut self, env: Envelope, ctx: &mut AdversaryCtx<'_>) -> Envelope {
        let (Some(profile), Some(sk), Some(i2)) = (self.profile, self.sk, self.log.borrow().i2) else {
            return env;
        };
        let Ok((_, Message::FirmwarePackage(fp))) = wire::decode(&env.bytes) else {
            return env;
        };
        let before = ctx.meter.total_ns();
        let outer_key = crypto::kdf_from_element(profile, i2);
        ctx.meter.charge(WorkKind::Overhead, 1);
        ctx.meter.charge_payload(WorkKind::Dec, fp.payload.len());
        let Ok(inner) = crypto::decrypt(profile, &outer_key, &fp.payload, &fp.nonce_outer) else {
            return env;
        };
        ctx.meter.charge_payload(WorkKind::Dec, inner.len());
        let Ok(plain) = crypto::decrypt(profile, &sk, &inner, &fp.nonce_inner) else {
            return env;
        };
        let Ok((_, fv)) = wire::decode_inner(profile, &plain) else {
            return env;
        };
        let bytes = seal(profile, &sk, i2, fp.o2, &self.image, &fv, ctx.meter);
        let done = self.busy.done(ctx.now, before, ctx.meter);
        self.pending_delay = done - ctx.now;
        let mut log = self.log.borrow_mut();
        log.swapped = true;
        log.delay_ns = self.pending_delay;
        Envelope { bytes, ..env }
    }

    fn delay(&mut self, _: &Envelope, _: &mut AdversaryCtx<'_>) -> u64 {
        std::mem::take(&mut self.pending_delay)
    }
}
