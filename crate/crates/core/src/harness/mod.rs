//! Experiment orchestration: seeded training runs with early stopping,
//! paired multi-seed comparisons and auxiliary-head analysis.

mod analyze;
mod bundle;
mod compare;
mod config;
mod early_stop;
mod run;

pub use analyze::{analyze_head, HeadAnalysis, HeadRow};
pub use bundle::ModelBundle;
pub use compare::{
    compare, emit_report, ComparisonReport, Improvement, ReportFormat, RunEntry, ScoreStats,
    VariantReport, CSV_HEADER, TOP_K,
};
pub use config::{ExperimentConfig, IterationUnit, TrainConfig};
pub use early_stop::{Decision, EarlyStopping};
pub use run::{
    evaluate_mse, fit_drawers, train_model, train_once, IterationRecord, RunResult, TrainedRun,
};
