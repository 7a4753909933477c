//! Metrics, experiment runs and result files.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod plot;

pub use config::{DataSource, ExperimentConfig, LambdaMode, Method};
pub use experiment::{
    experiment_rows, read_rows, run_experiment, run_trial_with, summarize, write_outputs, write_rows, DataPlan,
    ExperimentOutput, MetricRow, SummaryRow, TrialData, CSV_HEADER, SINGLE_SHOT_ROUND,
};
pub use metrics::{classification_error, estimation_errors, normalized_mse};
pub use plot::emit_plots;
