//! Experiment harness for `carma-levy-core`: JSON configuration, CSV/JSON
//! output and parallel Monte Carlo runs with reproducible seeding.

pub mod config;
pub mod error;
pub mod experiment;
pub mod io;

pub use config::{EstimatorConfig, ExperimentConfig, JumpConfig, LevyConfig, ModelConfig};
pub use error::HarnessError;
pub use experiment::{
    replication_rng, run_clt, run_consistency, run_single, ExperimentKind, ExperimentReport,
    GateOutcome, HSummary, ReplicationRow, Setup, SingleRun, Status,
};
