//! Configuration, verification suites and the run driver behind the `speclab` binary.

// NaN must fail every range check, so negated comparisons are intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod runner;
pub mod suites;

pub use config::{ExperimentConfig, SuiteName};
pub use runner::{exit_code, run, RunOutcome};
