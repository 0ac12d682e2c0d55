//! The class-incremental protocol: class partitioning, sample assignment,
//! missing-view simulation, session training, cumulative inference, and
//! metrics.

mod metrics;
mod missing;
mod plan;
mod trainer;

pub use metrics::{
    average_precision, classification_metrics, ClassificationMetrics, POSITIVE_THRESHOLD,
};
pub use missing::{simulate_missing, MissingSummary};
pub use plan::{assign_samples, partition_classes, SessionPlan};
pub use trainer::{
    dcl_patterns_for_step, evaluate, label_matrix, param_count_rows, predict, run_experiment,
    run_seed, train_session, ExperimentOutcome, SessionLog, ADAM_BETAS, ADAM_EPS,
};
