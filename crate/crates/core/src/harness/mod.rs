//! Live multi-process harness: a coordinator running the pull scheduler
//! against real worker processes over a line protocol.

pub mod coordinator;
pub mod index_file;
pub mod transport;
pub mod wire;
pub mod work;
pub mod worker;

pub use coordinator::{coordinate, Completion, Coordinator, CoordinatorOptions, HarnessReport};
pub use index_file::SharedIndexFile;
pub use transport::{Endpoint, Listener, Stream};
pub use wire::WireMessage;
pub use work::{SyntheticWork, WorkMode};
pub use worker::{worker_loop, WorkerConfig, WorkerExit, WorkerStats};
