//! Batch experiment runner: config parsing, orchestration and result files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod runner;

pub use config::{parse_config, ExperimentConfig, Violation};
pub use runner::{run_experiment, RunError, RunOptions, RunReport};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const GUARD: i32 = 3;
}
