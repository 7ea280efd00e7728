//! Event queue with deterministic ordering.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::topology::NodeId;

/// Simulated time in nanoseconds. Integer time keeps tick alignment and
/// tie detection exact.
pub type SimTime = u64;

pub fn secs_to_time(secs: f64) -> SimTime {
    (secs * 1e9).round() as SimTime
}

pub fn time_to_secs(t: SimTime) -> f64 {
    t as f64 / 1e9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    BatchComplete { node: NodeId, batch_id: u64 },
    PollTick(u64),
}

impl EventKind {
    /// Completions sort before the tick at the same instant, so an ack
    /// landing exactly on a tick is served by that tick.
    fn priority(&self) -> u8 {
        match self {
            EventKind::BatchComplete { .. } => 0,
            EventKind::PollTick(_) => 1,
        }
    }

    fn payload(&self) -> (u64, u64) {
        match *self {
            EventKind::BatchComplete { node, batch_id } => (u64::from(node.0), batch_id),
            EventKind::PollTick(k) => (k, 0),
        }
    }
}

/// Ordered by time, then kind priority, then insertion sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimEvent {
    pub time: SimTime,
    pub kind: EventKind,
    pub seq: u64,
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .cmp(&other.time)
            .then_with(|| self.kind.priority().cmp(&other.kind.priority()))
            .then_with(|| self.seq.cmp(&other.seq))
            .then_with(|| self.kind.payload().cmp(&other.kind.payload()))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<SimEvent>>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: SimTime, kind: EventKind) -> SimEvent {
        let ev = SimEvent { time, kind, seq: self.next_seq };
        self.next_seq += 1;
        self.heap.push(Reverse(ev));
        ev
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop().map(|Reverse(e)| e)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completion_before_tick_at_same_time() {
        let mut q = EventQueue::new();
        q.push(1_000, EventKind::PollTick(5));
        q.push(1_000, EventKind::BatchComplete { node: NodeId(2), batch_id: 9 });
        assert!(matches!(q.pop().unwrap().kind, EventKind::BatchComplete { .. }));
        assert!(matches!(q.pop().unwrap().kind, EventKind::PollTick(5)));
        assert!(q.pop().is_none());
    }

    #[test]
    fn fifo_among_equal_time_completions() {
        let mut q = EventQueue::new();
        for b in 0..4 {
            q.push(7, EventKind::BatchComplete { node: NodeId(3 - b as u32), batch_id: b });
        }
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).map(|e| e.seq).collect();
        assert_eq!(order, vec![0, 1, 2, 3]);
    }

    #[test]
    fn earlier_time_wins() {
        let mut q = EventQueue::new();
        q.push(10, EventKind::BatchComplete { node: NodeId(0), batch_id: 0 });
        q.push(9, EventKind::PollTick(1));
        assert_eq!(q.pop().unwrap().time, 9);
    }

    #[test]
    fn time_conversion() {
        assert_eq!(secs_to_time(0.2), 200_000_000);
        assert_eq!(time_to_secs(1_500_000_000), 1.5);
    }
}
