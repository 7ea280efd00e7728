//! Worker side of the live harness: an ack-driven pull loop.

use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::SchedulerConfig;
use crate::topology::{NodeId, NodeKind, NodeSpec};
use crate::workload::WorkloadProfile;

use super::index_file::SharedIndexFile;
use super::transport::{Endpoint, Stream};
use super::wire::WireMessage;
use super::work::{SyntheticWork, WorkMode};

#[derive(Debug, Clone)]
pub struct WorkerConfig {
    pub endpoint: Endpoint,
    pub node: NodeSpec,
    /// Items/sec this worker emulates.
    pub rate: f64,
    pub workload: String,
    pub workdir: PathBuf,
    pub mode: WorkMode,
    pub connect_attempts: u32,
    pub retry_delay: Duration,
}

impl WorkerConfig {
    /// Rate taken from the profile's table for this node's batch size,
    /// divided by `scale`.
    pub fn from_profile(
        endpoint: Endpoint,
        node: NodeSpec,
        profile: &WorkloadProfile,
        cfg: &SchedulerConfig,
        scale: f64,
        workdir: PathBuf,
        mode: WorkMode,
    ) -> Result<Self> {
        let scaled = profile.scaled_rates(scale)?;
        let table = match node.kind {
            NodeKind::Host => &scaled.host_rates,
            NodeKind::Csd => &scaled.csd_rates,
        };
        Ok(Self {
            endpoint,
            node,
            rate: table.lookup(cfg.batch_size_for(node.kind)),
            workload: profile.name.clone(),
            workdir,
            mode,
            connect_attempts: 50,
            retry_delay: Duration::from_millis(100),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchTiming {
    pub batch_id: u64,
    pub count: u64,
    pub service_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerStats {
    pub node_id: NodeId,
    pub kind: NodeKind,
    pub declared_rate: f64,
    pub mode: WorkMode,
    pub items: u64,
    pub busy_s: f64,
    /// Items per second of busy time.
    pub achieved_rate: f64,
    pub batches: Vec<BatchTiming>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkerExit {
    Drained,
    /// Coordinator unreachable or gone; exited without error.
    ConnectionLost,
}

fn connect(cfg: &WorkerConfig) -> Option<Stream> {
    for attempt in 0..cfg.connect_attempts.max(1) {
        match Stream::connect(&cfg.endpoint) {
            Ok(s) => return Some(s),
            Err(e) => {
                debug!("{}: connect attempt {attempt} to {} failed: {e}", cfg.node.id, cfg.endpoint);
                thread::sleep(cfg.retry_delay);
            }
        }
    }
    None
}

/// HELLO, then `{ACK, await ASSIGN, read index file, work, delete index
/// file}` until DRAIN, answering STATS_REQ at any point.
pub fn worker_loop(cfg: &WorkerConfig) -> Result<WorkerExit> {
    if !(cfg.rate.is_finite() && cfg.rate > 0.0) {
        return Err(Error::InvalidArgument(format!("worker rate {} must be positive", cfg.rate)));
    }
    let work = SyntheticWork::calibrate(cfg.mode);
    let Some(mut stream) = connect(cfg) else {
        warn!("{}: coordinator at {} unreachable, exiting", cfg.node.id, cfg.endpoint);
        return Ok(WorkerExit::ConnectionLost);
    };
    let mut reader = BufReader::new(stream.try_clone()?);
    let me = cfg.node.id;
    let mut stats = WorkerStats {
        node_id: me,
        kind: cfg.node.kind,
        declared_rate: cfg.rate,
        mode: cfg.mode,
        items: 0,
        busy_s: 0.0,
        achieved_rate: 0.0,
        batches: Vec::new(),
    };

    let hello = WireMessage::Hello { node_id: me, kind: cfg.node.kind, declared_rate: cfg.rate };
    let first = WireMessage::Ack { node_id: me, batch_id: None };
    if stream.send_line(&hello.to_string()).and_then(|_| stream.send_line(&first.to_string())).is_err() {
        return Ok(WorkerExit::ConnectionLost);
    }

    let mut line = String::new();
    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => {
                warn!("{me}: connection to coordinator lost");
                return Ok(WorkerExit::ConnectionLost);
            }
            Ok(_) => {}
        }
        let msg = match line.parse::<WireMessage>() {
            Ok(m) => m,
            Err(e) => {
                let _ = stream.send_line(&WireMessage::Err(e.to_string()).to_string());
                return Err(e);
            }
        };
        match msg {
            WireMessage::Assign { batch_id, start_index, count } => {
                let fail = |stream: &mut Stream, reason: String| {
                    let _ = stream.send_line(&WireMessage::Err(reason.clone()).to_string());
                    Err(Error::ProtocolViolation { node: "coordinator".into(), reason })
                };
                if count == 0 {
                    return fail(&mut stream, format!("ASSIGN {batch_id} has count 0"));
                }
                let idx = match SharedIndexFile::read(&cfg.workdir, batch_id) {
                    Ok(i) => i,
                    Err(e) => return fail(&mut stream, format!("batch {batch_id}: {e}")),
                };
                if idx.start_index != start_index || idx.count != count || idx.workload != cfg.workload {
                    return fail(&mut stream, format!("batch {batch_id}: index file disagrees with ASSIGN"));
                }
                let t = Instant::now();
                work.perform(count as f64 / cfg.rate);
                let service_s = t.elapsed().as_secs_f64();
                SharedIndexFile::remove(&cfg.workdir, batch_id)?;
                stats.items += count;
                stats.busy_s += service_s;
                stats.batches.push(BatchTiming { batch_id, count, service_s });
                let ack = WireMessage::Ack { node_id: me, batch_id: Some(batch_id) };
                if stream.send_line(&ack.to_string()).is_err() {
                    return Ok(WorkerExit::ConnectionLost);
                }
            }
            WireMessage::StatsReq | WireMessage::Drain => {
                stats.achieved_rate = if stats.busy_s > 0.0 { stats.items as f64 / stats.busy_s } else { 0.0 };
                let payload = serde_json::to_value(&stats)?;
                let sent = stream.send_line(&WireMessage::Stats(payload).to_string());
                if msg == WireMessage::Drain {
                    let _ = stream.shutdown();
                    return Ok(WorkerExit::Drained);
                }
                if sent.is_err() {
                    return Ok(WorkerExit::ConnectionLost);
                }
            }
            WireMessage::Err(reason) => {
                return Err(Error::Harness(format!("coordinator rejected {me}: {reason}")));
            }
            other => {
                let reason = format!("unexpected message `{other}`");
                let _ = stream.send_line(&WireMessage::Err(reason.clone()).to_string());
                return Err(Error::ProtocolViolation { node: "coordinator".into(), reason });
            }
        }
    }
}
