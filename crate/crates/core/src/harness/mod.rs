//! Experiment plumbing: exact oracles, convergence diagnostics, suite
//! configuration, the experiment runner and report emission.

pub mod config;
pub mod diagnostics;
pub mod enumerate;
pub mod experiments;
pub mod report;

pub use config::{ExperimentConfig, SuiteConfig};
pub use experiments::{run, run_experiment, RunOptions};
pub use report::{ExperimentReport, Format, Metric, Verdict};
