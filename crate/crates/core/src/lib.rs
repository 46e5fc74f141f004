//! Deterministic discrete-event simulator of two-level cluster
//! scheduling: a batch level (FCFS queue with EASY backfilling) on top of
//! application-level self-scheduling (STATIC/GSS/FAC/AF chunking), with an
//! optional coordination layer that lets idle hosts be lent across jobs.
//!
//! The crate is organized bottom-up:
//!
//! - [`time`], [`rng`], [`error`]: fixed-point time, named deterministic
//!   random streams, error type;
//! - [`platform`]: hosts, ownership state, network message costs;
//! - [`workload`], [`swf`]: job-set generation (ESP benchmark) and a
//!   standard workload-format bridge;
//! - [`als`], [`bls`], [`rca`]: the two scheduler levels and the
//!   coordination protocol between them;
//! - [`engine`]: the event loop tying everything together;
//! - [`metrics`], [`trace`]: post-run analysis and exports.

pub mod als;
pub mod bls;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod platform;
pub mod rca;
pub mod rng;
pub mod swf;
pub mod time;
pub mod trace;
pub mod workload;

/// Batch-level job identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct JobId(pub u64);

pub use engine::{SimConfig, Simulation, SimulationResult};
pub use error::SimError;
pub use time::{SimDuration, SimTime};
