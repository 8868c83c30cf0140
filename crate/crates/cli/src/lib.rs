//! Config-driven experiment runner over the `lipgeom` library.
//!
//! A run reads an [`ExperimentConfig`], resolves its group and metrics
//! (any failure there is a configuration error), executes the tasks in
//! order and assembles a [`Report`].

pub mod config;
pub mod error;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, GroupSpec, MetricSpec, TaskSpec};
pub use error::CliError;
pub use report::{Report, Status, TaskReport, TaskResult};
pub use run::{execute, prepare, run};

/// Exit code for configuration errors.
pub const EXIT_CONFIG: i32 = 3;
