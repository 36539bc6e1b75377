//! Numerical core for fair, peer-based benchmarking of residential
//! air-conditioning energy performance.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`ingest`] turns per-room telemetry into AC operation segments, each
//!    carrying its energy performance index (segment-average power) and the
//!    seven segment-wise noisy factors.
//! 2. [`selection`] picks, per room, the regression structure from
//!    [`regress`] with the lowest repeated cross-validated MAPE, and
//!    [`residual`] models the percentage residual of the chosen model as a
//!    kernel density.
//! 3. [`cluster`] groups rooms by area and preferred set point, and
//!    [`conditions`] derives a single value set of noisy factors per cluster.
//! 4. [`scoring`] evaluates every room's model at its cluster's uniform
//!    conditions, perturbs the prediction with sampled residuals and turns
//!    the per-draw cluster minimum into a stochastic score.
//!
//! [`thermsim`] implements the segment-integrated thermal balance of a
//! cooled room and generates synthetic fleets with known efficiency, used as
//! an end-to-end oracle.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and wall-clock timing live in the `acbench` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cluster;
pub mod conditions;
mod error;
pub mod ingest;
pub mod math;
pub mod regress;
pub mod residual;
pub mod rng;
pub mod scoring;
pub mod selection;
pub mod stats;
pub mod thermsim;

pub use error::{Error, ErrorKind, Result};
pub use regress::{FeatureVector, ModelStructure, TrainedPredictor, N_FEATURES};
