//! Incremental training over virtual time and the dense-to-sparse refresh schedule.

mod config;
mod monitor;
mod schedule;
mod sim;
mod store;

pub use config::D2SConfig;
pub use monitor::divergence_monitor;
pub use schedule::{d2s_schedule, prune_sources, Job, JobKind, JobLog};
pub use sim::{incremental_step, run_experiment, simulate, train_window, SimOutput, Track, TrackOutput, Variant};
pub use store::SnapshotStore;
