//! Data preparation, optimization, evaluation and reporting.

mod data;
mod eval;
mod loss;
mod optim;
pub mod plot;
mod report;
mod schedule;
mod trainer;

pub use data::{normalize_capture, one_hot, Examples};
pub use eval::{evaluate, predict, time_inference, ConfusionMatrix, EvalReport, SnrAccuracy};
pub use loss::{cce_loss, PROB_FLOOR};
pub use optim::Adam;
pub use report::{
    accuracy_csv, confusion_csv, eval_summary, history_csv, parse_accuracy_csv, summary_text, write_eval_report,
    write_history, ACCURACY_HEADER, HISTORY_HEADER,
};
pub use schedule::{fit, EpochRecord, History, Learner, Schedule, TrainConfig, Verdict};
pub use trainer::{evaluate_loss, train_step, ModelTrainer, StepStats, EVAL_BATCH};
