//! Experiment harness: configuration, the closed-loop scenario runner, the
//! threshold by mode matrix, trace replay and result files.

pub mod config;
pub mod output;
pub mod replay;
pub mod scenario;

pub use config::{ConfigError, ExperimentConfig, MatrixConfig, RunSpec, TrackConfig};
pub use scenario::{run_scenario, run_world, HostContext, ScenarioOutput};
