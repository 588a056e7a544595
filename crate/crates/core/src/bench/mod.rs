//! Benchmark tasks, evaluation metrics and the experiment harness.

pub mod experiment;
pub mod metrics;
pub mod tasks;

pub use experiment::{
    degree_sweep, evaluate, run_experiment, run_qubo, Arm, ArmReport, ExperimentOptions,
    ExperimentReport, SweepReport,
};
pub use metrics::Metrics;
pub use tasks::{
    default_encoding, default_network, extra_batch, generate, TaskData, TaskName, TaskSpec,
};
