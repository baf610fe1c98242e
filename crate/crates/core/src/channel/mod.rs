//! Deterministic discrete-event transport: virtual clock, work meters,
//! link timing with adversary hooks, and the trace log.

pub mod clock;
pub mod meter;
pub mod network;
pub mod trace;

pub use clock::{VirtualClock, VirtualTime, NS_PER_SEC};
pub use meter::{CostTable, WorkKind, WorkMeter};
pub use network::{ActorId, Adversary, AdversaryCtx, Envelope, LinkConfig, ModelOracle, NetStats, Network, Passive};
pub use trace::{Trace, TraceRecord};
