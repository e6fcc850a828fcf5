//! Benchmark harness for the federated anomaly-detection library.
//!
//! This crate turns the building blocks of `fedanom-core` into a runnable
//! pipeline: experiment configuration with stable fingerprints, synthetic
//! dataset generation, an append-only result store with resume support,
//! the experiment and grid runners, and report emission (CSV tables and
//! SVG figures).

pub mod config;
pub mod experiment;
pub mod report;
pub mod store;
pub mod synth;

pub use config::{ExperimentConfig, GridSpec};
pub use experiment::{run_experiment, run_grid, ResultsRecord, Stage, StageError};
pub use report::{emit_report, ReportKind, ReportOutput};
pub use store::RecordStore;
