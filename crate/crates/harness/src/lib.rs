//! Experiment harness for `sbl-core`: metrics, seeded Monte-Carlo sweeps,
//! flat-text configuration, matrix/CSV files and the `sbl` command line.

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod metrics;

pub use error::{HarnessError, Result};
