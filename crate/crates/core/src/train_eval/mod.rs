//! Training loop, optimizer, learning-rate schedule, ROC-AUC evaluation,
//! and the scenario/ablation harness.

mod metrics;
mod optim;
mod trainer;

pub use metrics::{roc_auc, roc_auc_pairwise, roc_points, MetricError};
pub use optim::{lr_schedule, AdamState, GradBuffer, TrainConfig};
pub use trainer::{
    config_fingerprint, evaluate, load_examples, performance_variation, render_ablation_csv,
    render_ablation_table, run_ablation_suite, score_examples, sort_reports, train,
    train_on_examples, AblationOutcome, EvalReport, Example, PipelineConfig, Scenario, ScoreRow,
    TrainError, TrainOutcome, TrainTrace,
};
