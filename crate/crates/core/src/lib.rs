//! Confidence-driven pair selection for multi-object tracking under
//! non-preemptive fixed-priority scheduling.
//!
//! Times are integer microseconds ([`Duration`], [`Instant`]). Tasks are
//! periodic tracking streams with implicit deadlines; every job runs one
//! frame through a (detection, association) pair.

pub mod analysis;
pub mod confidence;
pub mod config;
pub mod error;
pub mod experiment;
pub mod oracle;
pub mod scheduler;
pub mod task_model;
pub mod taskgen;
pub mod time;
pub mod verify;
pub mod workload;

pub use analysis::{rta, rta_min, RtaResult, Snapshot};
pub use error::{Error, Result};
pub use scheduler::{simulate, ConfidenceSource, ExecutionTimeModel, Policy, SimConfig, Trace};
pub use task_model::{wcet_of, Level, PairChoice, TaskSet, TaskSpec, WcetProfile};
pub use time::{Duration, Instant};
