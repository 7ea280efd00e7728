//! Deterministic discrete-event execution of the scheduler over a cluster.
//!
//! A node assigned `n` items at time `t` with rate `r` finishes item `j` at
//! `t + (j+1)/r` and the whole batch at `t + n/r`; the host additionally
//! pays `host_assign_overhead` before starting. Completion enqueues the
//! node's ack; poll ticks at multiples of the poll interval drain the acks.
//! All items are present at t = 0 (closed backlog).

pub mod event;
pub mod sweep;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::energy::{self, EnergyReport};
use crate::error::{Error, Result};
use crate::scheduler::{BatchAssignment, SchedulerConfig, SchedulerState};
use crate::topology::{ClusterConfig, NodeId, NodeKind, NodeSpec};
use crate::transfer::{self, PathLoad, TransferReport};
use crate::workload::WorkloadProfile;

use event::{secs_to_time, time_to_secs, EventKind, EventQueue, SimTime};

pub use sweep::{sweep, sweep_sequential, write_sweep_csv, SweepRow, SWEEP_CSV_HEADER};
#[cfg(feature = "parallel")]
pub use sweep::sweep_parallel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeItems {
    pub node: NodeId,
    pub kind: NodeKind,
    pub items: u64,
    pub batches: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub workload: String,
    pub csd_count: usize,
    pub csd_batch_size: u64,
    pub host_batch_size: u64,
    pub batch_ratio: f64,
    pub total_items: u64,
    pub makespan: f64,
    pub throughput: f64,
    pub per_node_items: Vec<NodeItems>,
    /// Share of items the ledger shows on CSDs.
    pub csd_fraction: f64,
    /// `(T_with - T_host_only) / T_with` against the paired host-only run.
    pub csd_fraction_paired: Option<f64>,
    pub baseline_throughput: f64,
    pub latency: LatencyStats,
    pub transfer: TransferReport,
    pub path_loads: Vec<PathLoad>,
    pub energy: EnergyReport,
}

impl SimReport {
    pub fn saturated_paths(&self) -> impl Iterator<Item = &PathLoad> {
        self.path_loads.iter().filter(|l| l.saturated)
    }
}

/// One executed batch with its timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub assignment: BatchAssignment,
    pub rate: f64,
    /// When the node starts on the first item (after any host overhead).
    pub start: f64,
    pub complete: f64,
}

/// Full outcome of one execution: ledger, per-batch timing, report.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub report: SimReport,
    pub ledger: Vec<BatchAssignment>,
    pub batches: Vec<BatchRecord>,
}

/// Latency of one item under closed-backlog arrival (every item is present
/// at t = 0): its wait until the batch was issued plus its position in the
/// batch.
pub fn item_latency(
    assignment: &BatchAssignment,
    item_index_within_batch: u64,
    rate: f64,
    cfg: &SchedulerConfig,
) -> f64 {
    let arrival = 0.0;
    (item_index_within_batch + 1) as f64 / rate + (assignment.assign_time(cfg) - arrival)
}

/// Runs the scheduler over `cluster` until every item is done.
pub fn run(cluster: &ClusterConfig, profile: &WorkloadProfile, cfg: &SchedulerConfig) -> Result<SimReport> {
    simulate(cluster, profile, cfg).map(|s| s.report)
}

pub fn simulate(cluster: &ClusterConfig, profile: &WorkloadProfile, cfg: &SchedulerConfig) -> Result<Simulation> {
    profile.validate()?;
    cfg.validate()?;
    let rates: BTreeMap<NodeId, f64> = cluster
        .nodes()
        .iter()
        .map(|n| {
            let table = match n.kind {
                NodeKind::Host => &profile.host_rates,
                NodeKind::Csd => &profile.csd_rates,
            };
            (n.id, table.lookup(cfg.batch_size_for(n.kind)))
        })
        .collect();
    let exec = execute(cluster.nodes(), profile.total_items, &rates, cfg)?;
    let baseline = execute_host_only(profile, cfg)?;
    let baseline_throughput = profile.total_items as f64 / baseline.makespan_secs();
    build(cluster, profile, cfg, exec, baseline_throughput)
}

/// The host-only reference run: the host alone at its end-to-end rate,
/// taking the whole workload as a single batch.
pub fn host_only(cluster: &ClusterConfig, profile: &WorkloadProfile, cfg: &SchedulerConfig) -> Result<SimReport> {
    profile.validate()?;
    cfg.validate()?;
    let exec = execute_host_only(profile, cfg)?;
    let throughput = profile.total_items as f64 / exec.makespan_secs();
    let host_cluster = cluster.with_csd_count(0)?;
    let giant = host_only_config(profile, cfg);
    let mut sim = build(&host_cluster, profile, &giant, exec, throughput)?;
    sim.report.batch_ratio = cfg.batch_ratio;
    sim.report.csd_batch_size = cfg.csd_batch_size;
    Ok(sim.report)
}

fn host_only_config(profile: &WorkloadProfile, cfg: &SchedulerConfig) -> SchedulerConfig {
    SchedulerConfig { host_batch_override: Some(profile.total_items), ..*cfg }
}

fn execute_host_only(profile: &WorkloadProfile, cfg: &SchedulerConfig) -> Result<Execution> {
    let host = [NodeSpec { id: NodeId::HOST, kind: NodeKind::Host }];
    let rates = BTreeMap::from([(NodeId::HOST, profile.baseline_host_rate())]);
    execute(&host, profile.total_items, &rates, &host_only_config(profile, cfg))
}

#[derive(Debug, Clone)]
struct Execution {
    batches: Vec<BatchRecord>,
    makespan: SimTime,
}

impl Execution {
    fn makespan_secs(&self) -> f64 {
        time_to_secs(self.makespan)
    }
}

fn execute(
    nodes: &[NodeSpec],
    total_items: u64,
    rates: &BTreeMap<NodeId, f64>,
    cfg: &SchedulerConfig,
) -> Result<Execution> {
    if total_items == 0 {
        return Err(Error::InvalidProfile("total_items must be > 0".into()));
    }
    for (node, &rate) in rates {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidRateTable(format!("node {node} has non-positive rate {rate}")));
        }
    }
    let poll = cfg.poll_interval_nanos();
    let overhead = secs_to_time(cfg.host_assign_overhead);
    let mut state = SchedulerState::new(total_items, nodes, *cfg)?;
    let mut queue = EventQueue::new();
    let mut batches: Vec<BatchRecord> = Vec::new();
    let mut makespan: SimTime = 0;

    let mut issue = |assignments: Vec<BatchAssignment>, queue: &mut EventQueue, state: &SchedulerState| {
        for a in assignments {
            let rate = rates[&a.node_id];
            let start = a.assign_tick * poll
                + if state.kind_of(a.node_id) == Some(NodeKind::Host) { overhead } else { 0 };
            let complete = start + secs_to_time(a.count as f64 / rate);
            queue.push(complete, EventKind::BatchComplete { node: a.node_id, batch_id: a.batch_id });
            batches.push(BatchRecord {
                assignment: a,
                rate,
                start: time_to_secs(start),
                complete: time_to_secs(complete),
            });
        }
    };

    let seeded = state.seed()?;
    issue(seeded, &mut queue, &state);
    if !state.is_exhausted() {
        queue.push(poll, EventKind::PollTick(1));
    }
    while let Some(ev) = queue.pop() {
        match ev.kind {
            EventKind::BatchComplete { node, batch_id } => {
                makespan = makespan.max(ev.time);
                state.on_ack(node, Some(batch_id))?;
            }
            EventKind::PollTick(k) => {
                let issued = state.on_poll_tick(k);
                issue(issued, &mut queue, &state);
                if !state.is_exhausted() {
                    queue.push((k + 1) * poll, EventKind::PollTick(k + 1));
                }
            }
        }
    }
    debug_assert!(state.is_exhausted());
    Ok(Execution { batches, makespan })
}

fn build(
    cluster: &ClusterConfig,
    profile: &WorkloadProfile,
    cfg: &SchedulerConfig,
    exec: Execution,
    baseline_throughput: f64,
) -> Result<Simulation> {
    let makespan = exec.makespan_secs();
    let total = profile.total_items;
    let throughput = total as f64 / makespan;

    let mut per_node: BTreeMap<NodeId, NodeItems> = cluster
        .nodes()
        .iter()
        .map(|n| (n.id, NodeItems { node: n.id, kind: n.kind, items: 0, batches: 0 }))
        .collect();
    for b in &exec.batches {
        let entry = per_node
            .get_mut(&b.assignment.node_id)
            .expect("ledger only names cluster nodes");
        entry.items += b.assignment.count;
        entry.batches += 1;
    }
    let per_node_items: Vec<NodeItems> = per_node.into_values().collect();
    let csd_items: u64 = per_node_items.iter().filter(|n| n.kind == NodeKind::Csd).map(|n| n.items).sum();

    let split: Vec<(NodeKind, u64)> = per_node_items.iter().map(|n| (n.kind, n.items)).collect();
    let transfer = transfer::account(profile, &split)?;
    let path_loads = transfer::path_loads(&transfer, &cluster.paths, makespan, cluster.csd_count());
    let energy = energy::report(&cluster.power, cluster.csd_count() as u32, throughput, baseline_throughput)?;

    let report = SimReport {
        workload: profile.name.clone(),
        csd_count: cluster.csd_count(),
        csd_batch_size: cfg.csd_batch_size,
        host_batch_size: cfg.batch_size_for(NodeKind::Host),
        batch_ratio: cfg.batch_ratio,
        total_items: total,
        makespan,
        throughput,
        per_node_items,
        csd_fraction: csd_items as f64 / total as f64,
        csd_fraction_paired: transfer::csd_fraction_paired(throughput, baseline_throughput).ok(),
        baseline_throughput,
        latency: latency_stats(&exec.batches, total),
        transfer,
        path_loads,
        energy,
    };
    let ledger = exec.batches.iter().map(|b| b.assignment).collect();
    Ok(Simulation { report, ledger, batches: exec.batches })
}

/// Latency statistics over every item, computed per batch without
/// materializing per-item values. Percentiles use the nearest-rank rule.
pub fn latency_stats(batches: &[BatchRecord], total_items: u64) -> LatencyStats {
    if total_items == 0 || batches.is_empty() {
        return LatencyStats { mean: 0.0, p50: 0.0, p95: 0.0, max: 0.0 };
    }
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    for b in batches {
        let n = b.assignment.count as f64;
        sum += n * b.start + n * (n + 1.0) / 2.0 / b.rate;
        max = max.max(b.start + n / b.rate);
    }
    LatencyStats {
        mean: sum / total_items as f64,
        p50: quantile(batches, total_items, 0.50, max),
        p95: quantile(batches, total_items, 0.95, max),
        max,
    }
}

fn quantile(batches: &[BatchRecord], total: u64, p: f64, max: f64) -> f64 {
    let rank = ((p * total as f64).ceil() as u64).clamp(1, total);
    let at_or_below = |x: f64| -> u64 {
        batches
            .iter()
            .map(|b| {
                let k = ((x - b.start) * b.rate).floor();
                if k <= 0.0 {
                    0
                } else {
                    (k as u64).min(b.assignment.count)
                }
            })
            .sum()
    };
    let (mut lo, mut hi) = (0.0_f64, max);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if at_or_below(mid) >= rank {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
