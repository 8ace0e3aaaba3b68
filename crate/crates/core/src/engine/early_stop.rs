use crate::protocol::{Base, IMPROVEMENT_EPSILON};

use super::improves;

#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopState {
    pub base: Base,
    pub patience: u32,
    pub best_value: Option<f64>,
    pub best_epoch: usize,
    pub epochs_since_best: u32,
    pub stopped: bool,
}

impl EarlyStopState {
    pub fn new(base: Base, patience: u32) -> Self {
        Self {
            base,
            patience,
            best_value: None,
            best_epoch: 0,
            epochs_since_best: 0,
            stopped: false,
        }
    }

    /// Feeds the monitored value of `epoch` (1-based).
    pub fn update(&mut self, monitored: f64, epoch: usize) {
        early_stop_update(self, monitored, epoch)
    }
}

pub fn early_stop_update(state: &mut EarlyStopState, monitored: f64, epoch: usize) {
    if state.stopped {
        return;
    }
    if improves(monitored, state.best_value, state.base.lower_is_better(), IMPROVEMENT_EPSILON) {
        state.best_value = Some(monitored);
        state.best_epoch = epoch;
        state.epochs_since_best = 0;
    } else {
        state.epochs_since_best += 1;
        if state.epochs_since_best >= state.patience {
            state.stopped = true;
        }
    }
}
