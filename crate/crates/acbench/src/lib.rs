//! File formats, pipeline stages and the `acbench` command line on top of
//! `acbench_core`.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod error;
pub mod report;
pub mod simulate;
pub mod stages;

pub use error::{AppError, AppResult};
