//! Experiment orchestration: recovery runs on planted models, threshold
//! sweeps over `(d, n)`, scaling-slope fits and CSV / xy reports.
//!
//! Every run is keyed by one master seed, which plants the frame (stream
//! `"plant"`), draws the data (`"sample"`) and drives the estimator's features
//! and bandwidth pairs.

mod config;
mod report;
mod run;
mod sweep;

pub use config::{
    AdaptiveConfig, EstimatorConfig, ExperimentConfig, GridConfig, ModelConfig, OutputConfig, RunSpec,
    ThresholdSearch, CONFIG_VERSION,
};
pub use report::{aggregate, report, threshold_series, AggregateRow, ReportSummary, RESULTS_HEADER};
pub use run::{run_or_record, run_recovery, run_recovery_with, RunRecord};
pub use sweep::{
    fit_slope, read_records, run_sweep, sweep, threshold_sweep, threshold_sweep_with, GridPoint, RecordWriter,
    SlopeFit, ThresholdRow, ThresholdTable,
};
