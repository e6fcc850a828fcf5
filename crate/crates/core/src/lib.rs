//! Federated time-series anomaly detection engine.
//!
//! This crate bundles everything needed to reproduce a federated anomaly
//! detection benchmark on multivariate time series:
//!
//! - [`dataset`]: loading, normalization, and sliding-window extraction;
//! - [`partition`]: splitting series across simulated clients;
//! - [`models`]: five window-based detectors trained by gradient descent;
//! - [`federation`]: aggregation strategies and the round loop;
//! - [`metrics`]: threshold-free and thresholded evaluation.
//!
//! Determinism is a design constraint throughout: all randomness derives
//! from a base seed via [`rng::derive`] sub-streams keyed by purpose, round,
//! and client, so results are bit-reproducible regardless of thread count.

pub mod dataset;
pub mod error;
pub mod federation;
pub mod matrix;
pub mod metrics;
pub mod models;
pub mod params;
pub mod partition;
pub mod rng;
pub mod tape;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use params::ParameterSet;
