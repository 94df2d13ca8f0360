//! Deterministic simulator for anomaly detection and reliability-based client
//! selection in cluster-based hierarchical federated learning over vehicles.

pub mod adversary;
pub mod aggregation;
pub mod config;
pub mod datasets;
pub mod detection;
pub mod engine;
pub mod error;
pub mod matrix;
pub mod numerics;
pub mod output;
pub mod reliability;
pub mod rng;
pub mod topology;

pub use config::{DefenseMode, RunConfig};
pub use engine::{run_experiment, ExperimentResult, RoundReport, Simulation, Summary};
pub use error::{Error, Result};
pub use numerics::{ModelSpec, ParamVector};
