//! Experiment orchestration: teacher training, student distillation under
//! each method, evaluation, and method comparison reports.

pub mod cli;
pub mod config;
pub mod report;
pub mod train;

pub use config::{CenterInit, EvalConfig, ExperimentConfig, Method, ScheduleConfig};
pub use report::{
    compare_methods, metric_records, protocol_metadata, run_student, ComparisonReport, MetricRecord, PairCounts, RunResult,
    Summary, FINAL_LOSS_WINDOW,
};
pub use train::{
    distill_student, distill_student_from, evaluate_embeddings, evaluate_network, evaluation_pairs, initial_bank, train_teacher,
    Checkpoint, EvalMetrics, LogRow, RunLog, StudentRun, TeacherRun,
};
