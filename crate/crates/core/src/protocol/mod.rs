//! End-to-end experiment orchestration: offline training, batched
//! incremental updates with dual evaluation, early stopping, the LwF
//! comparison, checkpoints and reports.

pub mod config;
pub mod report;
pub mod runner;
pub mod stats;

pub use config::{EarlyStop, ExperimentConfig, ModelChoice, WeightMode};
pub use report::{emit_reports, render_tables, ExperimentReport, RunReport};
pub use runner::{
    load_sources, prepare, Experiment, IncrementalOutcome, OfflineOutcome, PreparedData,
    INCOMING_TEST, OFFLINE_TEST,
};
pub use stats::{dataset_stats, DatasetStats};
