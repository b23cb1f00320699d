//! Experiment harness around `popdp`: configuration, graph ingestion, seeded
//! runs, sweeps over privacy levels and the verification suites.

pub mod config;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod sweep;
pub mod verify;

pub use config::{AgentKind, ExperimentConfig};
pub use error::{CliError, CliResult};
