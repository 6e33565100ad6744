//! Experiment orchestration: configuration, execution, and reports.
//!
//! The `qvlc` binary is a thin CLI over this module. Reports are
//! deterministic for a fixed configuration and seed regardless of the
//! worker-thread count.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{Caps, ExperimentConfig, Mode, RateGridSpec, Source, SourceSpec, StateSpec};
pub use report::{write_atomic, ReportRow, SimulationReport, Unit};
pub use runner::execute;
