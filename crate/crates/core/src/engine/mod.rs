//! Training loop and the state machines it drives: optimizer, learning-rate
//! scheduler, early stopping and model selection.

mod early_stop;
mod optimizer;
mod scheduler;
mod selection;
mod trace;
mod train;

pub use early_stop::{early_stop_update, EarlyStopState};
pub use optimizer::{optimizer_step, OptimizerState};
pub use scheduler::{scheduler_epoch_end, SchedulerState, MIN_LR};
pub use selection::select_model;
pub use trace::{EpochRecord, StopReason, TrainingTrace, TRACE_HEADER};
pub use train::{evaluate, train_fold, Evaluation, FoldTraining};

/// `value` beats `best` by more than `eps`. Non-finite values never improve.
pub(crate) fn improves(value: f64, best: Option<f64>, lower_is_better: bool, eps: f64) -> bool {
    if !value.is_finite() {
        return false;
    }
    match best {
        None => true,
        Some(b) if lower_is_better => value < b - eps,
        Some(b) => value > b + eps,
    }
}
