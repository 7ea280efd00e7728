//! Coordinator side of the live harness.
//!
//! One reader thread per worker connection and one tick thread all feed a
//! single channel. The loop draining that channel owns the
//! [`SchedulerState`], so every state transition happens on one thread and
//! in arrival order; an ack that reaches the queue before a tick is served
//! by that tick.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scheduler::{BatchAssignment, SchedulerConfig, SchedulerEvent, SchedulerState};
use crate::topology::{ClusterConfig, NodeId, NodeKind};
use crate::workload::WorkloadProfile;

use super::index_file::{self, SharedIndexFile};
use super::transport::{Endpoint, Listener, Stream};
use super::wire::WireMessage;
use super::worker::WorkerStats;

pub const DEFAULT_WORKER_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone)]
pub struct CoordinatorOptions {
    pub workdir: PathBuf,
    /// Silence allowed beyond a batch's expected service time, and the
    /// limit for all workers to say HELLO.
    pub worker_timeout: Duration,
}

impl CoordinatorOptions {
    pub fn new(workdir: impl Into<PathBuf>) -> Self {
        Self { workdir: workdir.into(), worker_timeout: DEFAULT_WORKER_TIMEOUT }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub batch_id: u64,
    pub node_id: NodeId,
    /// Seconds since seeding when the ack was processed.
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    /// False when the run was aborted; the remaining fields are partial.
    pub valid: bool,
    pub abort_reason: Option<String>,
    pub workload: String,
    pub total_items: u64,
    pub makespan_s: f64,
    pub throughput: f64,
    pub per_node_items: BTreeMap<NodeId, u64>,
    pub declared_rates: BTreeMap<NodeId, f64>,
    pub ledger: Vec<BatchAssignment>,
    pub events: Vec<SchedulerEvent>,
    pub completions: Vec<Completion>,
    pub worker_stats: Vec<WorkerStats>,
    /// Index files still present at shutdown (removed by the coordinator).
    pub leftover_index_files: Vec<u64>,
}

enum Msg {
    Connected(usize, Stream),
    Line(usize, String),
    Closed(usize),
    Tick(u64),
}

pub struct Coordinator {
    listener: Listener,
}

impl Coordinator {
    pub fn bind(endpoint: &Endpoint) -> Result<Self> {
        Ok(Self { listener: Listener::bind(endpoint)? })
    }

    pub fn local_endpoint(&self) -> Result<Endpoint> {
        Ok(self.listener.local_endpoint()?)
    }

    pub fn run(
        self,
        cluster: &ClusterConfig,
        profile: &WorkloadProfile,
        cfg: &SchedulerConfig,
        opts: &CoordinatorOptions,
    ) -> Result<HarnessReport> {
        let state = SchedulerState::new(profile.total_items, cluster.nodes(), *cfg)?;
        prepare_workdir(&opts.workdir)?;

        let (tx, rx) = mpsc::channel();
        let stop = Arc::new(AtomicBool::new(false));
        let expected = cluster.nodes().len();
        spawn_acceptor(self.listener, expected, tx.clone(), stop.clone());

        let mut run = Run::new(cluster, profile, cfg, opts, state, tx, stop.clone());
        let outcome = run.drive(&rx);
        stop.store(true, Ordering::SeqCst);
        run.finish(outcome)
    }
}

/// Binds `listen` and runs a full coordination.
pub fn coordinate(
    listen: &Endpoint,
    cluster: &ClusterConfig,
    profile: &WorkloadProfile,
    cfg: &SchedulerConfig,
    opts: &CoordinatorOptions,
) -> Result<HarnessReport> {
    Coordinator::bind(listen)?.run(cluster, profile, cfg, opts)
}

fn prepare_workdir(workdir: &Path) -> Result<()> {
    std::fs::create_dir_all(index_file::assign_dir(workdir))?;
    for stale in index_file::list(workdir)? {
        SharedIndexFile::remove(workdir, stale)?;
    }
    Ok(())
}

fn spawn_acceptor(listener: Listener, expected: usize, tx: Sender<Msg>, stop: Arc<AtomicBool>) {
    thread::spawn(move || {
        let mut conn = 0;
        while conn < expected && !stop.load(Ordering::SeqCst) {
            match listener.try_accept() {
                Ok(Some(stream)) => {
                    let reader = match stream.try_clone() {
                        Ok(r) => r,
                        Err(e) => {
                            warn!("dropping connection: {e}");
                            continue;
                        }
                    };
                    if tx.send(Msg::Connected(conn, stream)).is_err() {
                        return;
                    }
                    spawn_reader(conn, reader, tx.clone());
                    conn += 1;
                }
                Ok(None) => thread::sleep(Duration::from_millis(5)),
                Err(e) => {
                    warn!("accept failed: {e}");
                    thread::sleep(Duration::from_millis(5));
                }
            }
        }
        // keep the socket open until the run is over so late workers get a
        // refused HELLO rather than a connect error
        while !stop.load(Ordering::SeqCst) {
            thread::sleep(Duration::from_millis(20));
        }
        drop(listener);
    });
}

fn spawn_reader(conn: usize, stream: Stream, tx: Sender<Msg>) {
    thread::spawn(move || {
        let mut reader = BufReader::new(stream);
        let mut line = String::new();
        loop {
            line.clear();
            match reader.read_line(&mut line) {
                Ok(0) | Err(_) => {
                    let _ = tx.send(Msg::Closed(conn));
                    return;
                }
                Ok(_) => {
                    if tx.send(Msg::Line(conn, line.trim_end().to_string())).is_err() {
                        return;
                    }
                }
            }
        }
    });
}

fn spawn_ticker(t0: Instant, poll: Duration, tx: Sender<Msg>, stop: Arc<AtomicBool>) {
    thread::spawn(move || {
        let mut k = 1u64;
        while !stop.load(Ordering::SeqCst) {
            let due = t0 + poll * k as u32;
            let now = Instant::now();
            if due > now {
                thread::sleep(due - now);
            }
            if tx.send(Msg::Tick(k)).is_err() {
                return;
            }
            k += 1;
        }
    });
}

#[derive(Default)]
struct Peer {
    writer: Option<Stream>,
    node: Option<NodeId>,
    initial_ack: bool,
}

struct InFlight {
    sent: Instant,
    expected: Duration,
}

struct Run<'a> {
    cluster: &'a ClusterConfig,
    profile: &'a WorkloadProfile,
    cfg: &'a SchedulerConfig,
    opts: &'a CoordinatorOptions,
    state: SchedulerState,
    tx: Sender<Msg>,
    stop: Arc<AtomicBool>,
    peers: BTreeMap<usize, Peer>,
    conn_of: BTreeMap<NodeId, usize>,
    declared_rates: BTreeMap<NodeId, f64>,
    t0: Option<Instant>,
    in_flight: BTreeMap<u64, InFlight>,
    events: Vec<SchedulerEvent>,
    completions: Vec<Completion>,
    drained: BTreeSet<NodeId>,
    stats: BTreeMap<NodeId, WorkerStats>,
}

impl<'a> Run<'a> {
    fn new(
        cluster: &'a ClusterConfig,
        profile: &'a WorkloadProfile,
        cfg: &'a SchedulerConfig,
        opts: &'a CoordinatorOptions,
        state: SchedulerState,
        tx: Sender<Msg>,
        stop: Arc<AtomicBool>,
    ) -> Self {
        Self {
            cluster,
            profile,
            cfg,
            opts,
            state,
            tx,
            stop,
            peers: BTreeMap::new(),
            conn_of: BTreeMap::new(),
            declared_rates: BTreeMap::new(),
            t0: None,
            in_flight: BTreeMap::new(),
            events: Vec::new(),
            completions: Vec::new(),
            drained: BTreeSet::new(),
            stats: BTreeMap::new(),
        }
    }

    fn expected_nodes(&self) -> usize {
        self.cluster.nodes().len()
    }

    fn elapsed(&self) -> f64 {
        self.t0.map(|t| t.elapsed().as_secs_f64()).unwrap_or(0.0)
    }

    fn send(&mut self, conn: usize, msg: &WireMessage) {
        if let Some(w) = self.peers.get_mut(&conn).and_then(|p| p.writer.as_mut()) {
            if let Err(e) = w.send_line(&msg.to_string()) {
                debug!("send to connection {conn} failed: {e}");
            }
        }
    }

    fn send_node(&mut self, node: NodeId, msg: &WireMessage) {
        if let Some(&conn) = self.conn_of.get(&node) {
            self.send(conn, msg);
        }
    }

    fn reject(&mut self, conn: usize, reason: String) {
        warn!("rejecting connection {conn}: {reason}");
        self.send(conn, &WireMessage::Err(reason));
        if let Some(p) = self.peers.get_mut(&conn) {
            if let Some(w) = p.writer.take() {
                let _ = w.shutdown();
            }
        }
    }

    fn finished(&self) -> bool {
        self.t0.is_some() && self.drained.len() == self.expected_nodes() && self.stats.len() == self.expected_nodes()
    }

    /// Main loop. `Err(reason)` means abort.
    fn drive(&mut self, rx: &Receiver<Msg>) -> std::result::Result<(), String> {
        let hello_deadline = Instant::now() + self.opts.worker_timeout;
        while !self.finished() {
            let wait = if self.t0.is_none() {
                hello_deadline.saturating_duration_since(Instant::now())
            } else {
                self.opts.worker_timeout
            };
            let msg = match rx.recv_timeout(wait) {
                Ok(m) => m,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(if self.t0.is_none() {
                        format!(
                            "only {} of {} workers said HELLO within {:?}",
                            self.conn_of.len(),
                            self.expected_nodes(),
                            self.opts.worker_timeout
                        )
                    } else {
                        "no activity within the worker timeout".into()
                    });
                }
                Err(RecvTimeoutError::Disconnected) => return Err("message channel closed".into()),
            };
            match msg {
                Msg::Connected(conn, stream) => {
                    self.peers.insert(conn, Peer { writer: Some(stream), ..Default::default() });
                }
                Msg::Line(conn, line) => self.on_line(conn, &line)?,
                Msg::Closed(conn) => {
                    let node = self.peers.get(&conn).and_then(|p| p.node);
                    if let Some(node) = node {
                        if !self.drained.contains(&node) || !self.stats.contains_key(&node) {
                            return Err(format!("worker {node} disconnected mid-run"));
                        }
                    }
                }
                Msg::Tick(k) => self.on_tick(k)?,
            }
            if self.t0.is_none() && self.handshake_complete() {
                self.start();
            }
        }
        Ok(())
    }

    fn handshake_complete(&self) -> bool {
        self.conn_of.len() == self.expected_nodes()
            && self.conn_of.values().all(|c| self.peers.get(c).is_some_and(|p| p.initial_ack))
    }

    fn on_line(&mut self, conn: usize, line: &str) -> std::result::Result<(), String> {
        let msg = match line.parse::<WireMessage>() {
            Ok(m) => m,
            Err(e) => {
                self.send(conn, &WireMessage::Err(e.to_string()));
                return Ok(());
            }
        };
        let bound = self.peers.get(&conn).and_then(|p| p.node);
        match msg {
            WireMessage::Hello { node_id, kind, declared_rate } => {
                if bound.is_some() {
                    self.reject(conn, "duplicate HELLO".into());
                } else if self.cluster.kind_of(node_id) != Some(kind) {
                    self.reject(conn, format!("{node_id} ({kind}) is not part of this cluster"));
                } else if self.conn_of.contains_key(&node_id) {
                    self.reject(conn, format!("{node_id} already connected"));
                } else {
                    info!("worker {node_id} ({kind}) connected, declared rate {declared_rate}");
                    self.conn_of.insert(node_id, conn);
                    self.declared_rates.insert(node_id, declared_rate);
                    if let Some(p) = self.peers.get_mut(&conn) {
                        p.node = Some(node_id);
                    }
                }
            }
            WireMessage::Ack { node_id, batch_id } => {
                if bound != Some(node_id) {
                    self.send(conn, &WireMessage::Err(format!("ACK for {node_id} on a foreign connection")));
                    return Ok(());
                }
                if self.t0.is_none() {
                    match (batch_id, self.peers.get_mut(&conn)) {
                        (None, Some(p)) if !p.initial_ack => p.initial_ack = true,
                        _ => return Err(format!("{node_id} sent an unexpected ACK before seeding")),
                    }
                    return Ok(());
                }
                let ev = SchedulerEvent::Ack { node: node_id, completed: batch_id };
                if let Err(e) = self.state.apply(ev) {
                    self.send_node(node_id, &WireMessage::Err(e.to_string()));
                    return Err(e.to_string());
                }
                self.events.push(ev);
                if let Some(b) = batch_id {
                    self.in_flight.remove(&b);
                    self.completions.push(Completion { batch_id: b, node_id, time_s: self.elapsed() });
                }
            }
            WireMessage::Stats(payload) => match serde_json::from_value::<WorkerStats>(payload) {
                Ok(s) if Some(s.node_id) == bound => {
                    self.stats.insert(s.node_id, s);
                }
                _ => self.send(conn, &WireMessage::Err("unusable STATS payload".into())),
            },
            WireMessage::Err(reason) => {
                return Err(format!("worker {} reported: {reason}", bound.map(|n| n.to_string()).unwrap_or_default()));
            }
            other => {
                self.send(conn, &WireMessage::Err(format!("unexpected message `{other}`")));
            }
        }
        Ok(())
    }

    fn start(&mut self) {
        let t0 = Instant::now();
        self.t0 = Some(t0);
        for node in self.state.seed_order() {
            self.events.push(SchedulerEvent::Ack { node, completed: None });
        }
        // seed_order nodes are all known and idle, so seeding cannot fail
        let seeded = self.state.seed().expect("seeding a fresh state");
        self.events.push(SchedulerEvent::Tick(0));
        info!("all {} workers ready; seeding {} batches", self.expected_nodes(), seeded.len());
        self.dispatch(seeded);
        self.drain_idle();
        let poll = Duration::from_nanos(self.cfg.poll_interval_nanos());
        spawn_ticker(t0, poll, self.tx.clone(), self.stop.clone());
    }

    fn on_tick(&mut self, k: u64) -> std::result::Result<(), String> {
        let issued = self.state.on_poll_tick(k);
        self.events.push(SchedulerEvent::Tick(k));
        self.dispatch(issued);
        self.drain_idle();
        let now = Instant::now();
        for (batch, f) in &self.in_flight {
            if now.duration_since(f.sent) > f.expected + self.opts.worker_timeout {
                return Err(format!("batch {batch} exceeded its deadline"));
            }
        }
        Ok(())
    }

    fn dispatch(&mut self, assignments: Vec<BatchAssignment>) {
        for a in assignments {
            let idx = SharedIndexFile {
                batch_id: a.batch_id,
                start_index: a.start_index,
                count: a.count,
                workload: self.profile.name.clone(),
            };
            if let Err(e) = idx.write(&self.opts.workdir) {
                warn!("writing index file for batch {}: {e}", a.batch_id);
            }
            let rate = self.declared_rates.get(&a.node_id).copied().unwrap_or(f64::INFINITY);
            self.in_flight.insert(
                a.batch_id,
                InFlight { sent: Instant::now(), expected: Duration::from_secs_f64(a.count as f64 / rate) },
            );
            let msg = WireMessage::Assign { batch_id: a.batch_id, start_index: a.start_index, count: a.count };
            self.send_node(a.node_id, &msg);
        }
    }

    /// Once the workload is exhausted, every node with nothing in flight is
    /// done: tell it to drain.
    fn drain_idle(&mut self) {
        if !self.state.is_exhausted() {
            return;
        }
        let idle: Vec<NodeId> = self
            .conn_of
            .keys()
            .copied()
            .filter(|n| !self.drained.contains(n) && self.state.in_flight(*n).is_none())
            .collect();
        for node in idle {
            self.send_node(node, &WireMessage::Drain);
            self.drained.insert(node);
        }
    }

    fn finish(mut self, outcome: std::result::Result<(), String>) -> Result<HarnessReport> {
        if let Err(reason) = &outcome {
            warn!("harness aborted: {reason}");
            let nodes: Vec<NodeId> = self.conn_of.keys().copied().collect();
            for node in nodes {
                self.send_node(node, &WireMessage::Drain);
            }
        }
        let leftover = index_file::list(&self.opts.workdir)?;
        for &b in &leftover {
            SharedIndexFile::remove(&self.opts.workdir, b)?;
        }
        let ledger = self.state.assignments().to_vec();
        let mut per_node_items: BTreeMap<NodeId, u64> = self.cluster.nodes().iter().map(|n| (n.id, 0)).collect();
        for a in &ledger {
            *per_node_items.entry(a.node_id).or_default() += a.count;
        }
        let makespan_s = self.completions.iter().map(|c| c.time_s).fold(0.0, f64::max);
        let total_items = self.profile.total_items;
        Ok(HarnessReport {
            valid: outcome.is_ok(),
            abort_reason: outcome.err(),
            workload: self.profile.name.clone(),
            total_items,
            makespan_s,
            throughput: if makespan_s > 0.0 { total_items as f64 / makespan_s } else { 0.0 },
            per_node_items,
            declared_rates: self.declared_rates,
            ledger,
            events: self.events,
            completions: self.completions,
            worker_stats: self.stats.into_values().collect(),
            leftover_index_files: leftover,
        })
    }
}

/// Node kind lookup helper for callers building worker fleets.
pub fn worker_nodes(cluster: &ClusterConfig) -> Vec<(NodeId, NodeKind)> {
    cluster.nodes().iter().map(|n| (n.id, n.kind)).collect()
}
