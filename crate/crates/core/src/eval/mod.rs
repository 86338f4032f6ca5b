//! Metrics, experiment orchestration and report rendering.

pub mod experiment;
pub mod metrics;
pub mod report;

pub use experiment::{default_epochs, run_experiment, ExperimentConfig, ExperimentResult, Method, MethodParams};
pub use metrics::{evaluate, Metrics};
pub use report::{render_report, render_rows, Report, ReportStyle};
