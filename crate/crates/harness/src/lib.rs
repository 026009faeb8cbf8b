//! Experiment orchestration and command implementations for the `alice`
//! command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod stats;
pub mod suites;

pub use config::{ExperimentConfig, Regime, Scenario};
pub use error::{HarnessError, Result};
pub use report::SuiteReport;
