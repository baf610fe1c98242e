//! Protocol participants as message-driven state machines.
//!
//! Each actor owns a [`WorkMeter`] and a `busy_until` mark. Handling a
//! message starts when the actor is free, and its outputs leave once the
//! work charged while handling it has elapsed.

mod ed;
mod fds;
mod ppmr;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{ActorId, VirtualTime, WorkMeter, NS_PER_SEC};

pub use ed::{Ed, EdConfig, EdError, Pending, Verdict};
pub use fds::{Fds, FdsConfig, FirmwareEntry, FirmwareRepo, Recovered, RepoError};
pub use ppmr::{Ppmr, PpmrError};

/// Why the device refused a package.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectCause {
    Late,
    Corrupt,
    Forged,
    /// Outer or inner layer did not decrypt to a well-formed plaintext.
    KeyMismatch,
    Mismatch,
    Expired,
    Rollback,
    NoPending,
    CooldownActive,
}

impl RejectCause {
    pub const ALL: [RejectCause; 9] = [
        RejectCause::Late,
        RejectCause::Corrupt,
        RejectCause::Forged,
        RejectCause::KeyMismatch,
        RejectCause::Mismatch,
        RejectCause::Expired,
        RejectCause::Rollback,
        RejectCause::NoPending,
        RejectCause::CooldownActive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RejectCause::Late => "late",
            RejectCause::Corrupt => "corrupt",
            RejectCause::Forged => "forged",
            RejectCause::KeyMismatch => "key_mismatch",
            RejectCause::Mismatch => "mismatch",
            RejectCause::Expired => "expired",
            RejectCause::Rollback => "rollback",
            RejectCause::NoPending => "no_pending",
            RejectCause::CooldownActive => "cooldown_active",
        }
    }
}

impl fmt::Display for RejectCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RejectCause {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RejectCause::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown reject cause `{s}`"))
    }
}

/// A message an actor wants sent, leaving at `at`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outbound {
    pub at: VirtualTime,
    pub to: ActorId,
    pub bytes: Vec<u8>,
}

/// Wall-clock seconds seen by an actor at virtual time `now`.
pub fn epoch_at(base_epoch: u64, now: VirtualTime) -> u64 {
    base_epoch + now / NS_PER_SEC
}

/// Serializes an actor's work: returns when work charged to `meter`
/// since `before` completes, given the actor is free from `busy_until`.
fn finish(busy_until: &mut VirtualTime, now: VirtualTime, before: u64, meter: &WorkMeter) -> VirtualTime {
    let start = now.max(*busy_until);
    let done = start + (meter.total_ns() - before);
    *busy_until = done;
    done
}
