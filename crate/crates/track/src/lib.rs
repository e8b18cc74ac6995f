//! Scenario configuration, Monte Carlo runs and result files for the
//! `track` command.

pub mod config;
pub mod error;
pub mod output;
pub mod runner;
pub mod svg;

pub use config::{parse_config, parse_config_str, RunConfig, TrackerKind};
pub use error::HarnessError;
pub use output::emit_outputs;
pub use runner::{compare, run_monte_carlo, run_trial, Aggregate, Comparison, MonteCarloResults, TrialResult};
