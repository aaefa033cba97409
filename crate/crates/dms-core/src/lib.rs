//! Distributed discrete-event simulation of multi-firm manufacturing systems.
//!
//! The crate is organized around six pieces:
//!
//! * [`kernel`] - a sequential discrete-event kernel with manufacturing
//!   building blocks (create, process, batch, separate, port send, dispose),
//!   FIFO resources and per-block deterministic random streams.
//! * [`model`] - hierarchical activity models (boxes connected by typed
//!   arcs) plus a minimum-cut partitioner that groups leaf activities into
//!   logical processes, in [`partition`].
//! * [`scenario`] - the `.dms` scenario format: logical processes, their
//!   block networks, inter-process links, run horizon and seeds. Includes
//!   the three-firm supply-chain case study used throughout the tests.
//! * [`transport`] - named message queues carrying timestamped messages,
//!   with an in-process backend and a TCP backend sharing one wire format.
//! * [`sync`] - the conservative synchronization engine that runs one
//!   logical process against its input channels using null messages.
//! * [`run`] - the orchestrator: sequential (flattened) runs, one-thread-
//!   per-process runs, multi-process TCP runs, trace comparison and the
//!   global report.
//!
//! Runs are deterministic: given the same scenario and seed, sequential and
//! distributed executions produce the same data messages and the same
//! per-process statistics, which is what the test suite leans on.

pub mod dist;
pub mod kernel;
pub mod model;
pub mod partition;
pub mod report;
pub mod rng;
pub mod run;
pub mod scenario;
pub mod sync;
pub mod time;
pub mod transport;

pub use dist::Dist;
pub use kernel::{Block, BlockKind, Entity, Event, EventClass, Kernel};
pub use report::{GlobalReport, LocalReport};
pub use rng::RngStream;
pub use scenario::Scenario;
pub use sync::{Progress, SafeTime, SyncEngine};
pub use time::SimTime;
pub use transport::{QueueAddress, TimestampedMessage};
