//! Wires the actors to the network and runs the event loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::actors::{Ed, EdError, Fds, FirmwareEntry, FirmwareRepo, Outbound, Ppmr, PpmrError, RepoError, Verdict};
use crate::channel::{
    ActorId, Adversary, Envelope, NetStats, Network, Passive, Trace, VirtualClock, VirtualTime, WorkMeter, NS_PER_SEC,
};
use crate::config::SimConfig;
use crate::dppuf::{DppufError, PpufModel};
use crate::wire::{DeviceKey, FirmwareVersion};
use crate::{Dppuf, PublicModel};

/// Guards against adversaries that inject without end.
pub const MAX_EVENTS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Puf(#[from] DppufError),
    #[error(transparent)]
    Ppmr(#[from] PpmrError),
    #[error(transparent)]
    Repo(#[from] RepoError),
    #[error(transparent)]
    Ed(#[from] EdError),
    #[error("no device {0}")]
    NoDevice(u16),
    #[error("event limit reached")]
    EventLimit,
}

#[derive(Debug)]
enum Event {
    Transmit { from: ActorId, out: Outbound },
    Deliver(Envelope),
    Deadline { ed: u16, request: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerdictRecord {
    pub ed: u16,
    pub arrived: VirtualTime,
    pub decided: VirtualTime,
    pub verdict: Verdict,
}

pub struct Simulation {
    config: SimConfig,
    clock: VirtualClock<Event>,
    net: Network,
    trace: Trace,
    eds: Vec<Ed>,
    fds: Fds,
    ppmr: Ppmr,
    verdicts: Vec<VerdictRecord>,
    events: usize,
}

/// The device line and images a simulation is populated with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixture {
    pub installed: FirmwareVersion,
    pub repo: FirmwareRepo,
}

pub const DEFAULT_DEVICE: DeviceKey = DeviceKey {
    vendor_id: 0x5eed,
    device_type: 0x0233,
    hw_revision: 1,
};

const DAY: u64 = 86_400;

impl Fixture {
    /// A device at revision 1 and a repository holding revision 2 with a
    /// random image of `image_len` bytes.
    pub fn standard(config: &SimConfig, image_len: usize) -> Self {
        let epoch = config.base_epoch;
        let installed = FirmwareVersion::for_device(DEFAULT_DEVICE, 1, epoch - 60 * DAY, epoch + 365 * DAY);
        let fv = FirmwareVersion::for_device(DEFAULT_DEVICE, 2, epoch - DAY, epoch + 365 * DAY);
        let mut repo = FirmwareRepo::new();
        repo.insert(FirmwareEntry {
            fv,
            image: synthetic_image(config.derive_seed("image"), image_len),
        })
        .expect("empty repo");
        Self { installed, repo }
    }
}

/// Deterministic pseudo-random firmware contents.
pub fn synthetic_image(seed: u64, len: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = vec![0u8; len];
    rng.fill(&mut v[..]);
    v
}

impl Simulation {
    /// Builds one server and `devices` devices running `fixture.installed`,
    /// enrolls every public model and starts with a passive network.
    pub fn new(config: SimConfig, fixture: Fixture, devices: u16) -> Result<Self, SimError> {
        let costs = config.effective_costs();
        let stream = |label: &str| ChaCha8Rng::seed_from_u64(config.derive_seed(label));
        let mut ppmr = Ppmr::new(costs);
        let fds_hw = Dppuf::build(config.puf.instance(config.derive_seed("fds/puf")))?;
        ppmr.register(PpufModel::export(&fds_hw, costs.ppuf_sim, costs.ppuf_hw)?)?;
        let fds_id = fds_hw.instance_id();
        let mut fds = Fds::new(
            fds_hw,
            config.profile,
            config.fds,
            fixture.repo,
            costs,
            config.base_epoch,
            config.search_options(),
            config.noise_flips,
            stream("fds/rng"),
        );
        let mut eds = Vec::new();
        for i in 0..devices {
            let hw = Dppuf::build(config.puf.instance(config.derive_seed(&format!("ed{i}/puf"))))?;
            let model: PublicModel = PpufModel::export(&hw, costs.ppuf_sim, costs.ppuf_hw)?;
            ppmr.register(model)?;
            fds.register_address(hw.instance_id(), ActorId::Ed(i));
            eds.push(Ed::new(
                i,
                hw,
                config.profile,
                config.ed,
                fds_id,
                fixture.installed,
                costs,
                config.base_epoch,
                config.search_options(),
                config.noise_flips,
                stream(&format!("ed{i}/rng")),
            ));
        }
        let net = Network::new(config.link, costs, Box::new(Passive));
        Ok(Self {
            config,
            clock: VirtualClock::new(),
            net,
            trace: Trace::new(),
            eds,
            fds,
            ppmr,
            verdicts: Vec::new(),
            events: 0,
        })
    }

    /// Installs the adversary that sits on every link from now on.
    pub fn set_adversary(&mut self, adversary: Box<dyn Adversary>) {
        let costs = self.config.effective_costs();
        self.net = Network::new(self.config.link, costs, adversary);
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn now(&self) -> VirtualTime {
        self.clock.now()
    }

    pub fn epoch(&self) -> u64 {
        self.config.base_epoch + self.now() / NS_PER_SEC
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn ed(&self, i: u16) -> &Ed {
        &self.eds[i as usize]
    }

    pub fn ed_mut(&mut self, i: u16) -> &mut Ed {
        &mut self.eds[i as usize]
    }

    pub fn devices(&self) -> usize {
        self.eds.len()
    }

    pub fn fds(&self) -> &Fds {
        &self.fds
    }

    pub fn fds_mut(&mut self) -> &mut Fds {
        &mut self.fds
    }

    pub fn ppmr(&self) -> &Ppmr {
        &self.ppmr
    }

    pub fn adversary_meter(&self) -> &WorkMeter {
        self.net.adversary_meter()
    }

    pub fn net_stats(&self) -> NetStats {
        self.net.stats()
    }

    pub fn verdicts(&self) -> &[VerdictRecord] {
        &self.verdicts
    }

    /// Starts an update on device `ed` at the current time.
    pub fn initiate(&mut self, ed: u16) -> Result<(), SimError> {
        let now = self.clock.now();
        let dev = self.eds.get_mut(ed as usize).ok_or(SimError::NoDevice(ed))?;
        let out = dev.initiate(now, &mut self.trace)?;
        let p = *dev.pending().expect("just issued");
        self.clock
            .schedule(p.deadline + 1, Event::Deadline { ed, request: p.request });
        self.clock.schedule(
            out.at,
            Event::Transmit {
                from: ActorId::Ed(ed),
                out,
            },
        );
        Ok(())
    }

    /// Moves the clock forward with nothing else happening.
    pub fn advance_to(&mut self, t: VirtualTime) {
        self.clock.advance_to(t);
    }

    /// Processes events until the queue drains.
    pub fn run(&mut self) -> Result<(), SimError> {
        self.run_until(VirtualTime::MAX)
    }

    /// Processes events scheduled at or before `t`.
    pub fn run_until(&mut self, t: VirtualTime) -> Result<(), SimError> {
        while self.clock.peek_time().is_some_and(|at| at <= t) {
            self.events += 1;
            if self.events > MAX_EVENTS {
                return Err(SimError::EventLimit);
            }
            let (now, ev) = self.clock.pop().expect("peeked");
            self.step(now, ev);
        }
        Ok(())
    }

    fn step(&mut self, now: VirtualTime, ev: Event) {
        match ev {
            Event::Transmit { from, out } => {
                for (at, env) in self.net.send(now, from, out.to, out.bytes, &self.ppmr, &mut self.trace) {
                    self.clock.schedule(at, Event::Deliver(env));
                }
            }
            Event::Deliver(env) => {
                self.net.mark_delivered();
                let to = env.to;
                let outs = match to {
                    ActorId::Ppmr => self.ppmr.handle(now, &env, &mut self.trace),
                    ActorId::Fds => self.fds.handle(now, &env, &mut self.trace),
                    ActorId::Ed(i) => {
                        if let Some(dev) = self.eds.get_mut(i as usize) {
                            let (decided, verdict) = dev.receive(now, &env, &mut self.trace);
                            self.verdicts.push(VerdictRecord {
                                ed: i,
                                arrived: now,
                                decided,
                                verdict,
                            });
                        }
                        Vec::new()
                    }
                    ActorId::Adversary => Vec::new(),
                };
                for out in outs {
                    self.clock.schedule(out.at, Event::Transmit { from: to, out });
                }
            }
            Event::Deadline { ed, request } => {
                self.eds[ed as usize].on_deadline(now, request, &mut self.trace);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actors::RejectCause;

    fn small() -> SimConfig {
        let mut c = SimConfig::default();
        c.puf.width = 64;
        c.ed.set_size = 512;
        c
    }

    #[test]
    fn honest_session_accepts_and_installs() {
        let cfg = small();
        let fx = Fixture::standard(&cfg, 1000);
        let want = fx.repo.get(&DEFAULT_DEVICE).unwrap().clone();
        let mut sim = Simulation::new(cfg, fx, 1).unwrap();
        sim.initiate(0).unwrap();
        sim.run().unwrap();
        assert_eq!(sim.verdicts().len(), 1);
        match &sim.verdicts()[0].verdict {
            Verdict::Accept { fv, image } => {
                assert_eq!(fv, &want.fv);
                assert_eq!(image, &want.image);
            }
            v => panic!("unexpected {v:?}"),
        }
        assert_eq!(sim.ed(0).installed(), &want.fv);
        assert!(sim.ed(0).pending().is_none());
        let s = sim.net_stats();
        assert_eq!((s.sent, s.delivered, s.in_flight()), (5, 5, 0));
    }

    #[test]
    fn second_initiation_is_single_flight() {
        let cfg = small();
        let fx = Fixture::standard(&cfg, 10);
        let mut sim = Simulation::new(cfg, fx, 1).unwrap();
        sim.initiate(0).unwrap();
        assert!(matches!(sim.initiate(0), Err(SimError::Ed(EdError::AlreadyPending))));
    }

    #[test]
    fn same_seed_same_trace() {
        let run = || {
            let cfg = small();
            let fx = Fixture::standard(&cfg, 64);
            let mut sim = Simulation::new(cfg, fx, 1).unwrap();
            sim.initiate(0).unwrap();
            sim.run().unwrap();
            sim.trace().to_jsonl()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn deadline_expiry_records_late() {
        let mut cfg = small();
        cfg.ed.response_deadline_ns = 10;
        let fx = Fixture::standard(&cfg, 10);
        let mut sim = Simulation::new(cfg, fx, 1).unwrap();
        sim.initiate(0).unwrap();
        sim.run().unwrap();
        assert_eq!(sim.verdicts()[0].verdict, Verdict::Reject(RejectCause::Late));
        assert_eq!(sim.trace().find("ed0", "timeout").count(), 1);
    }
}
