//! Experiment orchestration, run configuration, and file formats for the
//! `plrds-core` numerical laboratory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod formats;
pub mod pool;

pub use config::{parse_config, ConfigError, ConfigErrors, Experiment, RunConfig};
pub use experiment::{run_experiment, RunManifest, Status, TaskStatus};
pub use pool::RayonPool;
