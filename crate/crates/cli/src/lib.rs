//! Pipeline plumbing behind the `subpop` binary: experiment manifests,
//! fit artifacts, prediction tables, metrics and the replicated runner.

pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod pipeline;
pub mod predictions;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use experiment::{run_experiment, write_outputs, ExperimentResult, MetricsRow};
pub use metrics::{metric_accuracy, metric_f1};
pub use pipeline::{fit_pipeline, parse_fit_json, FitArtifact, PipelineOptions};
