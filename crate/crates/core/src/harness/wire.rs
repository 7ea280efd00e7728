//! Line protocol between coordinator and workers.
//!
//! One message per line, UTF-8, space-separated fields in fixed order:
//!
//! ```text
//! HELLO <node_id> <host|csd> <declared_rate>
//! ACK <node_id> <batch_id|none>
//! ASSIGN <batch_id> <start_index> <count>
//! DRAIN
//! STATS_REQ
//! STATS <compact json>
//! ERR <message>
//! ```

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::topology::{NodeId, NodeKind};

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    Hello { node_id: NodeId, kind: NodeKind, declared_rate: f64 },
    Ack { node_id: NodeId, batch_id: Option<u64> },
    Assign { batch_id: u64, start_index: u64, count: u64 },
    Drain,
    StatsReq,
    Stats(serde_json::Value),
    Err(String),
}

impl fmt::Display for WireMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WireMessage::Hello { node_id, kind, declared_rate } => {
                write!(f, "HELLO {node_id} {kind} {declared_rate}")
            }
            WireMessage::Ack { node_id, batch_id: Some(b) } => write!(f, "ACK {node_id} {b}"),
            WireMessage::Ack { node_id, batch_id: None } => write!(f, "ACK {node_id} none"),
            WireMessage::Assign { batch_id, start_index, count } => {
                write!(f, "ASSIGN {batch_id} {start_index} {count}")
            }
            WireMessage::Drain => f.write_str("DRAIN"),
            WireMessage::StatsReq => f.write_str("STATS_REQ"),
            // serde_json's compact form never contains a raw newline
            WireMessage::Stats(v) => write!(f, "STATS {v}"),
            WireMessage::Err(m) => write!(f, "ERR {}", m.replace(['\n', '\r'], " ")),
        }
    }
}

fn field<T: FromStr>(line: &str, value: &str, name: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Wire {
        line: line.to_string(),
        reason: format!("bad {name} `{value}`"),
    })
}

impl FromStr for WireMessage {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let line = line.trim_end_matches(['\r', '\n']);
        let malformed = |reason: &str| Error::Wire { line: line.to_string(), reason: reason.to_string() };
        let (kind, rest) = line.split_once(' ').unwrap_or((line, ""));
        let args: Vec<&str> = rest.split_whitespace().collect();
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(malformed(&format!("{kind} takes {n} fields, got {}", args.len())))
            }
        };
        match kind {
            "HELLO" => {
                arity(3)?;
                let node_id = args[0].parse().map_err(|_| malformed("bad node id"))?;
                let kind = args[1].parse().map_err(|_| malformed("bad node kind"))?;
                let declared_rate: f64 = field(line, args[2], "rate")?;
                if !(declared_rate.is_finite() && declared_rate > 0.0) {
                    return Err(malformed("declared rate must be positive"));
                }
                Ok(WireMessage::Hello { node_id, kind, declared_rate })
            }
            "ACK" => {
                arity(2)?;
                let node_id = args[0].parse().map_err(|_| malformed("bad node id"))?;
                let batch_id = match args[1] {
                    "none" => None,
                    b => Some(field(line, b, "batch id")?),
                };
                Ok(WireMessage::Ack { node_id, batch_id })
            }
            "ASSIGN" => {
                arity(3)?;
                Ok(WireMessage::Assign {
                    batch_id: field(line, args[0], "batch id")?,
                    start_index: field(line, args[1], "start index")?,
                    count: field(line, args[2], "count")?,
                })
            }
            "DRAIN" => arity(0).map(|_| WireMessage::Drain),
            "STATS_REQ" => arity(0).map(|_| WireMessage::StatsReq),
            "STATS" => serde_json::from_str(rest)
                .map(WireMessage::Stats)
                .map_err(|e| malformed(&format!("bad stats payload: {e}"))),
            "ERR" => Ok(WireMessage::Err(rest.to_string())),
            "" => Err(malformed("empty line")),
            other => Err(malformed(&format!("unknown message kind `{other}`"))),
        }
    }
}
