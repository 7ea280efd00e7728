//! Discrete-event simulator and live multi-process harness for a storage
//! server whose drives carry their own application processors.
//!
//! A single host and up to 36 computational storage drives (CSDs) pull
//! batches of work from a tick-driven scheduler. The crate models the
//! scheduler as a pure state machine ([`scheduler`]), executes it in a
//! deterministic event loop ([`simulator`]), accounts data movement
//! ([`transfer`]) and whole-server energy ([`energy`]), and can drive the
//! very same state machine against real worker processes ([`harness`]).

pub mod energy;
pub mod error;
pub mod harness;
pub mod reproduce;
pub mod scenario;
pub mod scheduler;
pub mod simulator;
pub mod topology;
pub mod transfer;
pub mod workload;

pub use error::{Error, Result};
pub use scheduler::{BatchAssignment, SchedulerConfig, SchedulerState};
pub use simulator::{run, SimReport};
pub use topology::{ClusterConfig, DataPathSpec, NodeId, NodeKind, NodeSpec, PowerModel};
pub use workload::{RateTable, WorkloadProfile};
