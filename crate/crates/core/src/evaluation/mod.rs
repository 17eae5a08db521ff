//! Metrics, guessing baselines and experiment orchestration.

mod baselines;
mod experiment;
mod metrics;

pub use baselines::{
    baseline_empirical, baseline_fixed, baseline_uniform, BaselineKind, BaselineResult, UniformDraw,
    DEFAULT_REPETITIONS,
};
pub use experiment::{
    evaluate_model, lambda_grid, prepare_dataset, run_experiment, select_lambda, train_experiment, AgeBaselines,
    CvResult, Experiment, ExperimentConfig, Metrics, PrepMetadata, Prepared, ReportSummary, Task, TaskMetrics,
    DEFAULT_GRID_POINTS,
};
pub use metrics::{
    curve_weighted_mean, f1_score, mae, mae_by_age, write_curve_csv, AgePoint, ConfusionCounts, F1Score,
};
