//! Virtual time and the event queue.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Nanoseconds of simulated time.
pub type VirtualTime = u64;

pub const NS_PER_SEC: u64 = 1_000_000_000;

/// Pending events ordered by `(time, insertion sequence)`, so ties resolve
/// in the order they were scheduled.
#[derive(Debug)]
pub struct VirtualClock<E> {
    now: VirtualTime,
    seq: u64,
    queue: BinaryHeap<Reverse<Entry<E>>>,
}

#[derive(Debug)]
struct Entry<E> {
    at: VirtualTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

impl<E> Default for VirtualClock<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> VirtualClock<E> {
    pub fn new() -> Self {
        Self {
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> VirtualTime {
        self.now
    }

    /// Schedules `event`; times in the past are clamped to now.
    pub fn schedule(&mut self, at: VirtualTime, event: E) {
        let at = at.max(self.now);
        self.queue.push(Reverse(Entry {
            at,
            seq: self.seq,
            event,
        }));
        self.seq += 1;
    }

    pub fn peek_time(&self) -> Option<VirtualTime> {
        self.queue.peek().map(|Reverse(e)| e.at)
    }

    /// Removes the earliest event and advances time to it.
    pub fn pop(&mut self) -> Option<(VirtualTime, E)> {
        let Reverse(e) = self.queue.pop()?;
        self.now = e.at;
        Some((e.at, e.event))
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Moves time forward without an event; never backwards.
    pub fn advance_to(&mut self, t: VirtualTime) {
        self.now = self.now.max(t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_by_time_then_sequence() {
        let mut c = VirtualClock::new();
        c.schedule(10, "b");
        c.schedule(5, "a");
        c.schedule(10, "c");
        assert_eq!(c.pop(), Some((5, "a")));
        assert_eq!(c.pop(), Some((10, "b")));
        assert_eq!(c.pop(), Some((10, "c")));
        assert_eq!(c.pop(), None);
        assert_eq!(c.now(), 10);
    }

    #[test]
    fn never_goes_backwards() {
        let mut c = VirtualClock::new();
        c.schedule(100, 1);
        c.pop();
        c.schedule(50, 2);
        assert_eq!(c.pop(), Some((100, 2)));
        c.advance_to(20);
        assert_eq!(c.now(), 100);
    }
}
