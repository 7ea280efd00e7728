//! Pull-based batch scheduler as a pure state machine.
//!
//! Nodes ack when their current batch is done; the ack doubles as a request
//! for the next batch. Acks queue up FIFO and are only serviced when the
//! scheduler wakes on a poll tick. The host receives `round(R * B)` items
//! per batch, each CSD receives `B`. Issued batches never move.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{NodeId, NodeKind, NodeSpec};

pub const DEFAULT_POLL_INTERVAL: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    /// CSD batch size `B`.
    pub csd_batch_size: u64,
    /// Host/CSD batch-size ratio `R`.
    pub batch_ratio: f64,
    /// Host batch size to use instead of `round(R * B)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host_batch_override: Option<u64>,
    #[serde(default = "default_poll_interval")]
    pub poll_interval: f64,
    /// Seconds added to every host batch.
    #[serde(default)]
    pub host_assign_overhead: f64,
}

fn default_poll_interval() -> f64 {
    DEFAULT_POLL_INTERVAL
}

impl SchedulerConfig {
    pub fn new(csd_batch_size: u64, batch_ratio: f64) -> Self {
        Self {
            csd_batch_size,
            batch_ratio,
            host_batch_override: None,
            poll_interval: DEFAULT_POLL_INTERVAL,
            host_assign_overhead: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSchedulerConfig(m));
        if self.csd_batch_size == 0 {
            return bad("csd_batch_size must be >= 1".into());
        }
        if !(self.batch_ratio.is_finite() && self.batch_ratio >= 1.0) {
            return bad(format!("batch_ratio must be >= 1, got {}", self.batch_ratio));
        }
        if self.host_batch_override == Some(0) {
            return bad("host_batch_override must be >= 1".into());
        }
        if !(self.poll_interval.is_finite() && self.poll_interval > 0.0) {
            return bad(format!("poll_interval must be > 0, got {}", self.poll_interval));
        }
        if self.poll_interval_nanos() == 0 {
            return bad("poll_interval must be at least 1 ns".into());
        }
        if !(self.host_assign_overhead.is_finite() && self.host_assign_overhead >= 0.0) {
            return bad(format!(
                "host_assign_overhead must be >= 0, got {}",
                self.host_assign_overhead
            ));
        }
        Ok(())
    }

    pub fn batch_size_for(&self, kind: NodeKind) -> u64 {
        match kind {
            NodeKind::Csd => self.csd_batch_size,
            NodeKind::Host => self.host_batch_override.unwrap_or_else(|| {
                ((self.batch_ratio * self.csd_batch_size as f64).round() as u64).max(1)
            }),
        }
    }

    pub fn poll_interval_nanos(&self) -> u64 {
        (self.poll_interval * 1e9).round() as u64
    }

    /// Wall time of poll tick `tick`, in seconds.
    pub fn tick_time(&self, tick: u64) -> f64 {
        (tick * self.poll_interval_nanos()) as f64 / 1e9
    }
}

/// How [`calibrate_ratio`] quantizes the raw rate ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioPolicy {
    Round,
    Ceil,
    Floor,
}

/// Batch ratio that balances a host of `host_rate` against drives of
/// `csd_rate`: the quantized rate ratio, at least 1. Returns it with the raw
/// ratio.
pub fn calibrate_ratio(host_rate: f64, csd_rate: f64, policy: RatioPolicy) -> Result<(u64, f64)> {
    for (name, r) in [("host_rate", host_rate), ("csd_rate", csd_rate)] {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidArgument(format!("{name} must be > 0, got {r}")));
        }
    }
    let raw = host_rate / csd_rate;
    let q = match policy {
        RatioPolicy::Round => raw.round(),
        RatioPolicy::Ceil => raw.ceil(),
        RatioPolicy::Floor => raw.floor(),
    };
    Ok(((q as u64).max(1), raw))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchAssignment {
    pub batch_id: u64,
    pub node_id: NodeId,
    pub start_index: u64,
    pub count: u64,
    /// Poll tick at which the batch was issued; tick 0 is the initial seeding.
    pub assign_tick: u64,
}

impl BatchAssignment {
    pub fn end_index(&self) -> u64 {
        self.start_index + self.count
    }

    pub fn assign_time(&self, cfg: &SchedulerConfig) -> f64 {
        cfg.tick_time(self.assign_tick)
    }
}

/// One input to the state machine. A run is fully determined by its event
/// sequence, which is what the live harness records for replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedulerEvent {
    Ack { node: NodeId, completed: Option<u64> },
    Tick(u64),
}

#[derive(Debug, Clone)]
pub struct SchedulerState {
    cfg: SchedulerConfig,
    total_items: u64,
    kinds: BTreeMap<NodeId, NodeKind>,
    next_index: u64,
    pending_acks: VecDeque<NodeId>,
    in_flight: BTreeMap<NodeId, u64>,
    assignments: Vec<BatchAssignment>,
    exhausted: bool,
}

impl SchedulerState {
    pub fn new(total_items: u64, nodes: &[NodeSpec], cfg: SchedulerConfig) -> Result<Self> {
        cfg.validate()?;
        let mut kinds = BTreeMap::new();
        for n in nodes {
            if kinds.insert(n.id, n.kind).is_some() {
                return Err(Error::InvalidCluster(format!("duplicate node id {}", n.id)));
            }
        }
        Ok(Self {
            cfg,
            total_items,
            kinds,
            next_index: 0,
            pending_acks: VecDeque::new(),
            in_flight: BTreeMap::new(),
            assignments: Vec::new(),
            exhausted: total_items == 0,
        })
    }

    /// Initial seeding: every node acks at t = 0, host first then CSDs in
    /// id order, and tick 0 serves them.
    pub fn seed(&mut self) -> Result<Vec<BatchAssignment>> {
        let order = self.seed_order();
        for node in order {
            self.on_ack(node, None)?;
        }
        Ok(self.on_poll_tick(0))
    }

    pub fn seed_order(&self) -> Vec<NodeId> {
        let mut order: Vec<NodeId> = self
            .kinds
            .iter()
            .filter(|(_, k)| **k == NodeKind::Host)
            .map(|(id, _)| *id)
            .collect();
        order.extend(self.kinds.iter().filter(|(_, k)| **k == NodeKind::Csd).map(|(id, _)| *id));
        order
    }

    /// Records that `node` finished `completed` (or is asking for its first
    /// batch when `None`) and queues it for service at the next tick.
    pub fn on_ack(&mut self, node: NodeId, completed: Option<u64>) -> Result<()> {
        let violation = |reason: String| Error::ProtocolViolation { node: node.to_string(), reason };
        if !self.kinds.contains_key(&node) {
            return Err(violation("unknown node".into()));
        }
        if self.pending_acks.contains(&node) {
            return Err(violation("already waiting for an assignment".into()));
        }
        match (self.in_flight.get(&node).copied(), completed) {
            (Some(b), Some(c)) if b == c => {
                self.in_flight.remove(&node);
            }
            (Some(b), _) => {
                return Err(violation(format!("batch {b} is still in flight")));
            }
            (None, Some(c)) => {
                return Err(violation(format!("acked batch {c} which is not in flight")));
            }
            (None, None) => {}
        }
        self.pending_acks.push_back(node);
        Ok(())
    }

    /// Serves every queued ack in FIFO order. Nodes that ack after the
    /// workload is exhausted get nothing.
    pub fn on_poll_tick(&mut self, tick: u64) -> Vec<BatchAssignment> {
        let mut issued = Vec::new();
        while let Some(node) = self.pending_acks.pop_front() {
            let remaining = self.total_items - self.next_index;
            if remaining == 0 {
                continue;
            }
            let kind = self.kinds[&node];
            let count = self.cfg.batch_size_for(kind).min(remaining);
            let a = BatchAssignment {
                batch_id: self.assignments.len() as u64,
                node_id: node,
                start_index: self.next_index,
                count,
                assign_tick: tick,
            };
            self.next_index += count;
            self.in_flight.insert(node, a.batch_id);
            self.assignments.push(a);
            issued.push(a);
        }
        self.exhausted = self.next_index == self.total_items;
        issued
    }

    pub fn apply(&mut self, event: SchedulerEvent) -> Result<Vec<BatchAssignment>> {
        match event {
            SchedulerEvent::Ack { node, completed } => self.on_ack(node, completed).map(|_| Vec::new()),
            SchedulerEvent::Tick(k) => Ok(self.on_poll_tick(k)),
        }
    }

    /// Feeds a recorded event sequence into a fresh state.
    pub fn replay(
        total_items: u64,
        nodes: &[NodeSpec],
        cfg: SchedulerConfig,
        events: &[SchedulerEvent],
    ) -> Result<Self> {
        let mut state = Self::new(total_items, nodes, cfg)?;
        for &ev in events {
            state.apply(ev)?;
        }
        Ok(state)
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.cfg
    }

    pub fn total_items(&self) -> u64 {
        self.total_items
    }

    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    pub fn pending_acks(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.pending_acks.iter().copied()
    }

    pub fn in_flight(&self, node: NodeId) -> Option<u64> {
        self.in_flight.get(&node).copied()
    }

    pub fn in_flight_count(&self) -> usize {
        self.in_flight.len()
    }

    pub fn assignments(&self) -> &[BatchAssignment] {
        &self.assignments
    }

    pub fn into_assignments(self) -> Vec<BatchAssignment> {
        self.assignments
    }

    pub fn is_exhausted(&self) -> bool {
        self.exhausted
    }

    /// Exhausted with nothing left in flight.
    pub fn is_complete(&self) -> bool {
        self.exhausted && self.in_flight.is_empty()
    }

    pub fn kind_of(&self, node: NodeId) -> Option<NodeKind> {
        self.kinds.get(&node).copied()
    }
}

pub const LEDGER_CSV_HEADER: [&str; 5] = ["batch_id", "node_id", "start_index", "count", "assign_time"];

/// Writes the assignment ledger as `batch_id,node_id,start_index,count,assign_time`.
pub fn write_ledger_csv<W: Write>(
    ledger: &[BatchAssignment],
    cfg: &SchedulerConfig,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LEDGER_CSV_HEADER)?;
    for a in ledger {
        w.write_record([
            a.batch_id.to_string(),
            a.node_id.to_string(),
            a.start_index.to_string(),
            a.count.to_string(),
            format!("{:.6}", a.assign_time(cfg)),
        ])?;
    }
    w.flush()?;
    Ok(())
}
