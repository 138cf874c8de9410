//! Repeated-split evaluation, leave-one-generator-out and robustness sweeps.

mod config;
mod experiment;
mod metrics;
mod report;

pub use config::{ExperimentConfig, Task};
pub use experiment::{
    class_label, leave_one_out, plan_repetition, robustness_sweep, run_experiment, train_on_videos, Degradation,
    LevelReport, MissingPolicy, RepetitionPlan, SweepOptions, SweepReport, FAKE, REAL,
};
pub use metrics::{
    aggregate_video, aggregate_video_plurality, macro_accuracy, macro_accuracy_over, per_class_accuracy,
    ConfusionMatrix,
};
pub use report::{emit_report, render_markdown_grid, EvaluationReport, GridEntry, ReportFormat, RepetitionResult, REPORT_VERSION};
