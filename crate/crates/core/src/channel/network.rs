//! Link timing and the Dolev-Yao interposition point.
//!
//! Every message passes the adversary hooks in a fixed order: observe,
//! drop, modify, delay. The adversary may also inject messages of its own
//! from any hook; injected traffic is not hooked again.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::clock::{VirtualTime, NS_PER_SEC};
use super::meter::{CostTable, WorkMeter};
use super::trace::Trace;
use crate::bits::{Challenge, Response};
use crate::wire::InstanceId;
use crate::PublicModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActorId {
    Ed(u16),
    Fds,
    Ppmr,
    Adversary,
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActorId::Ed(i) => write!(f, "ed{i}"),
            ActorId::Fds => f.write_str("fds"),
            ActorId::Ppmr => f.write_str("ppmr"),
            ActorId::Adversary => f.write_str("adversary"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub id: u64,
    pub from: ActorId,
    pub to: ActorId,
    pub sent_at: VirtualTime,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub latency_ns: u64,
    /// `None` means unlimited.
    pub bytes_per_second: Option<u64>,
}

impl LinkConfig {
    /// Latency plus serialization time, rounded up to whole nanoseconds.
    pub fn transit_ns(&self, len: usize) -> u64 {
        let transfer = match self.bytes_per_second {
            None => 0,
            Some(0) => u64::MAX / 4,
            Some(b) => (len as u128 * NS_PER_SEC as u128).div_ceil(b as u128) as u64,
        };
        self.latency_ns.saturating_add(transfer)
    }
}

/// Public model lookups available to anyone, the adversary included.
pub trait ModelOracle {
    /// Simulates the registered model, charging the simulation to `meter`.
    fn challenge_model(&self, id: &InstanceId, challenge: &Challenge, meter: &mut WorkMeter) -> Option<Response>;

    /// Downloads a published model.
    fn model(&self, id: &InstanceId) -> Option<&PublicModel>;
}

/// What a hook can see and do besides inspecting the message.
pub struct AdversaryCtx<'a> {
    pub now: VirtualTime,
    /// The adversary's own work, at server-equivalent rates.
    pub meter: &'a mut WorkMeter,
    pub models: &'a dyn ModelOracle,
    injections: &'a mut Vec<(VirtualTime, ActorId, ActorId, Vec<u8>)>,
}

impl AdversaryCtx<'_> {
    /// Sends `bytes` as if from `from`, leaving at `at` (not before now).
    pub fn inject(&mut self, at: VirtualTime, from: ActorId, to: ActorId, bytes: Vec<u8>) {
        self.injections.push((at.max(self.now), from, to, bytes));
    }
}

pub trait Adversary {
    fn observe(&mut self, _env: &Envelope, _ctx: &mut AdversaryCtx<'_>) {}

    fn drop_message(&mut self, _env: &Envelope, _ctx: &mut AdversaryCtx<'_>) -> bool {
        false
    }

    fn modify(&mut self, env: Envelope, _ctx: &mut AdversaryCtx<'_>) -> Envelope {
        env
    }

    /// Extra latency for this message.
    fn delay(&mut self, _env: &Envelope, _ctx: &mut AdversaryCtx<'_>) -> u64 {
        0
    }
}

/// An adversary that does nothing.
#[derive(Debug, Default)]
pub struct Passive;

impl Adversary for Passive {}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NetStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub injected: u64,
    /// Frame bytes put on the wire, injections included.
    pub bytes: u64,
}

impl NetStats {
    pub fn in_flight(&self) -> u64 {
        self.sent - self.delivered - self.dropped
    }
}

pub struct Network {
    link: LinkConfig,
    adversary: Box<dyn Adversary>,
    meter: WorkMeter,
    next_id: u64,
    stats: NetStats,
}

impl Network {
    pub fn new(link: LinkConfig, costs: CostTable, adversary: Box<dyn Adversary>) -> Self {
        Self {
            link,
            adversary,
            meter: WorkMeter::new(costs),
            next_id: 0,
            stats: NetStats::default(),
        }
    }

    pub fn link(&self) -> &LinkConfig {
        &self.link
    }

    pub fn adversary_meter(&self) -> &WorkMeter {
        &self.meter
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    fn envelope(&mut self, now: VirtualTime, from: ActorId, to: ActorId, bytes: Vec<u8>) -> Envelope {
        let id = self.next_id;
        self.next_id += 1;
        self.stats.sent += 1;
        self.stats.bytes += bytes.len() as u64;
        Envelope {
            id,
            from,
            to,
            sent_at: now,
            bytes,
        }
    }

    /// Puts a message on the wire. Returns every resulting delivery: the
    /// message itself unless dropped, plus anything the adversary injected.
    pub fn send(
        &mut self,
        now: VirtualTime,
        from: ActorId,
        to: ActorId,
        bytes: Vec<u8>,
        models: &dyn ModelOracle,
        trace: &mut Trace,
    ) -> Vec<(VirtualTime, Envelope)> {
        let env = self.envelope(now, from, to, bytes);
        let mut injections = Vec::new();
        let mut out = Vec::new();
        {
            let mut ctx = AdversaryCtx {
                now,
                meter: &mut self.meter,
                models,
                injections: &mut injections,
            };
            self.adversary.observe(&env, &mut ctx);
            if self.adversary.drop_message(&env, &mut ctx) {
                self.stats.dropped += 1;
                trace
                    .push(now, "network", "drop")
                    .with("id", env.id)
                    .with("from", env.from.to_string())
                    .with("to", env.to.to_string());
            } else {
                let before = env.bytes.clone();
                let env = self.adversary.modify(env, &mut ctx);
                let extra = self.adversary.delay(&env, &mut ctx);
                let at = now
                    .saturating_add(self.link.transit_ns(env.bytes.len()))
                    .saturating_add(extra);
                let rec = trace
                    .push(now, "network", "send")
                    .with("id", env.id)
                    .with("from", env.from.to_string())
                    .with("to", env.to.to_string())
                    .with("bytes", env.bytes.len() as u64)
                    .with("deliver_at", at);
                if env.bytes != before {
                    rec.with("modified", true);
                }
                if extra > 0 {
                    rec.with("delayed_ns", extra);
                }
                out.push((at, env));
            }
        }
        for (at, from, to, bytes) in injections {
            let env = self.envelope(at, from, to, bytes);
            self.stats.injected += 1;
            let deliver = at.saturating_add(self.link.transit_ns(env.bytes.len()));
            trace
                .push(now, "adversary", "inject")
                .with("id", env.id)
                .with("from", env.from.to_string())
                .with("to", env.to.to_string())
                .with("bytes", env.bytes.len() as u64)
                .with("deliver_at", deliver);
            out.push((deliver, env));
        }
        out
    }

    pub fn mark_delivered(&mut self) {
        self.stats.delivered += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct NoModels;

    impl ModelOracle for NoModels {
        fn challenge_model(&self, _: &InstanceId, _: &Challenge, _: &mut WorkMeter) -> Option<Response> {
            None
        }

        fn model(&self, _: &InstanceId) -> Option<&PublicModel> {
            None
        }
    }

    struct DropAll;

    impl Adversary for DropAll {
        fn drop_message(&mut self, _: &Envelope, _: &mut AdversaryCtx<'_>) -> bool {
            true
        }
    }

    #[test]
    fn instant_link_delivers_now() {
        let mut n = Network::new(LinkConfig::default(), CostTable::symbolic(), Box::new(Passive));
        let mut t = Trace::new();
        let d = n.send(42, ActorId::Ed(0), ActorId::Ppmr, vec![1, 2, 3], &NoModels, &mut t);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].0, 42);
        assert_eq!(n.stats().in_flight(), 1);
    }

    #[test]
    fn bandwidth_adds_serialization_time() {
        let link = LinkConfig {
            latency_ns: 10,
            bytes_per_second: Some(11_520),
        };
        // 8N1 at 115200 baud moves 11520 bytes per second
        assert_eq!(link.transit_ns(11_520), 10 + NS_PER_SEC);
        assert_eq!(link.transit_ns(1), 10 + 86_806);
    }

    #[test]
    fn dropped_messages_are_counted() {
        let mut n = Network::new(LinkConfig::default(), CostTable::symbolic(), Box::new(DropAll));
        let mut t = Trace::new();
        assert!(n
            .send(0, ActorId::Fds, ActorId::Ed(0), vec![0], &NoModels, &mut t)
            .is_empty());
        let s = n.stats();
        assert_eq!((s.sent, s.dropped, s.in_flight()), (1, 1, 0));
        assert_eq!(t.find("network", "drop").count(), 1);
    }
}
