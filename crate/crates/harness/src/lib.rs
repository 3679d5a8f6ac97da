//! Experiment runner for the area-sweeping agents: random instances, paired
//! evaluations, comparison reports and the `areasweep` command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod instance;
pub mod report;

pub use config::{AgentKind, AgentSection, EventsSection, ExperimentConfig, InstanceVariant, MapSection, RunSection};
pub use error::{HarnessError, Result};
pub use experiment::{
    evaluate_controller, evaluate_kind, make_controller, run_experiment, train_dps_max, worker_count, Evaluation,
    InstanceSetup, WORKERS_ENV,
};
pub use instance::generate_instance;
pub use report::{percent_difference, sign_test, ComparisonReport, InstanceRow, SignTest, Summary};
