//! Epoch-level learning-rate schedules.
//!
//! `t` counts completed epochs. After `t` epoch ends:
//!
//! * STEP: `lr₀ · γ^⌊t / step_size⌋`
//! * LR_PLATEAU: multiply by γ once the monitored base has failed to improve
//!   by ε for `patience` consecutive epochs; the counter then restarts
//! * COS: `η_min + ½ (lr₀ − η_min)(1 + cos(π t / T_max))`
//! * COS_RESTART: same with `t mod T_restart` in place of `t`
//!
//! The rate never drops below [`MIN_LR`].

use std::f64::consts::PI;

use crate::protocol::{Base, Scheduler, TrainingProtocol, IMPROVEMENT_EPSILON};

use super::improves;

pub const MIN_LR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerState {
    pub kind: Scheduler,
    pub base_lr: f64,
    pub current_lr: f64,
    pub epoch_counter: u32,
    pub base: Base,
    pub patience: u32,
    pub step_size: u32,
    pub gamma: f64,
    pub best_monitored_value: Option<f64>,
    pub epochs_since_improvement: u32,
    pub t_max: u32,
    pub t_restart: u32,
    pub eta_min: f64,
}

impl SchedulerState {
    pub fn new(protocol: &TrainingProtocol) -> Self {
        let max_epoch = protocol.max_epoch.max(1);
        Self {
            kind: protocol.scheduler,
            base_lr: protocol.learning_rate,
            current_lr: protocol.learning_rate,
            epoch_counter: 0,
            base: protocol.scheduler_base_or_default(),
            patience: protocol.scheduler_patience.unwrap_or(crate::protocol::DEFAULT_SCHEDULER_PATIENCE),
            step_size: protocol.scheduler_step_size.unwrap_or(crate::protocol::DEFAULT_STEP_SIZE),
            gamma: protocol.scheduler_gamma.unwrap_or(crate::protocol::DEFAULT_GAMMA),
            best_monitored_value: None,
            epochs_since_improvement: 0,
            t_max: max_epoch,
            t_restart: max_epoch.div_ceil(3),
            eta_min: 0.0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.current_lr
    }

    fn cosine(&self, t: u32, period: u32) -> f64 {
        let frac = t as f64 / period as f64;
        self.eta_min + 0.5 * (self.base_lr - self.eta_min) * (1.0 + (PI * frac).cos())
    }
}

/// Advances the schedule by one completed epoch and returns the rate for the
/// next epoch. `monitored` is only consulted by LR_PLATEAU.
pub fn scheduler_epoch_end(state: &mut SchedulerState, monitored: f64) -> f64 {
    state.epoch_counter += 1;
    let t = state.epoch_counter;
    let lr = match state.kind {
        Scheduler::None => state.base_lr,
        Scheduler::Step => state.base_lr * state.gamma.powi((t / state.step_size) as i32),
        Scheduler::Cos => state.cosine(t.min(state.t_max), state.t_max),
        Scheduler::CosRestart => state.cosine(t % state.t_restart, state.t_restart),
        Scheduler::LrPlateau => {
            let lower = state.base.lower_is_better();
            if improves(monitored, state.best_monitored_value, lower, IMPROVEMENT_EPSILON) {
                state.best_monitored_value = Some(monitored);
                state.epochs_since_improvement = 0;
            } else {
                state.epochs_since_improvement += 1;
            }
            if state.epochs_since_improvement >= state.patience {
                state.epochs_since_improvement = 0;
                state.current_lr * state.gamma
            } else {
                state.current_lr
            }
        }
    };
    state.current_lr = lr.max(MIN_LR);
    state.current_lr
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::load_preset;

    fn state(kind: Scheduler, lr: f64, max_epoch: u32) -> SchedulerState {
        let p = TrainingProtocol {
            scheduler: kind,
            learning_rate: lr,
            max_epoch,
            ..load_preset("cv-baseline").unwrap()
        };
        SchedulerState::new(&p)
    }

    fn run(s: &mut SchedulerState, epochs: u32) -> Vec<f64> {
        (0..epochs).map(|_| scheduler_epoch_end(s, 0.0)).collect()
    }

    #[test]
    fn step_decays_by_ten_every_ten_epochs() {
        let mut s = state(Scheduler::Step, 1e-3, 60);
        let lrs = run(&mut s, 20);
        assert!((lrs[9] - 1e-4).abs() < 1e-18);
        assert!((lrs[19] - 1e-5).abs() < 1e-19);
        assert_eq!(lrs[8], 1e-3);
    }

    #[test]
    fn cosine_endpoints_and_midpoint() {
        let mut s = state(Scheduler::Cos, 1e-2, 100);
        assert_eq!(s.lr(), 1e-2);
        let lrs = run(&mut s, 100);
        assert!((lrs[49] - 0.5e-2).abs() < 1e-15);
        // eta_min = 0 is floored
        assert_eq!(lrs[99], MIN_LR);
    }

    #[test]
    fn restarts_jump_back() {
        let mut s = state(Scheduler::CosRestart, 1e-2, 30);
        assert_eq!(s.t_restart, 10);
        let lrs = run(&mut s, 30);
        assert_eq!(lrs[9], 1e-2);
        assert_eq!(lrs[19], 1e-2);
        assert!(lrs[8] < lrs[7]);
    }

    #[test]
    fn plateau_waits_for_patience() {
        let mut s = state(Scheduler::LrPlateau, 1e-3, 60);
        s.patience = 3;
        let series = [1.0, 0.9, 0.9, 0.95, 0.90005, 0.8, 0.8, 0.8, 0.8];
        let lrs: Vec<f64> = series.iter().map(|&v| scheduler_epoch_end(&mut s, v)).collect();
        // epochs 3, 4, 5 fail to improve (0.90005 is within ε) → reduce after epoch 5
        assert_eq!(&lrs[..4], &[1e-3; 4]);
        assert!((lrs[4] - 1e-4).abs() < 1e-18);
        // epoch 6 improves, then 7, 8, 9 stall → second reduction after epoch 9
        assert!((lrs[7] - 1e-4).abs() < 1e-18);
        assert!((lrs[8] - 1e-5).abs() < 1e-19);
    }

    #[test]
    fn plateau_on_metric_wants_increase() {
        let mut s = state(Scheduler::LrPlateau, 1e-3, 60);
        s.base = Base::ValMetric;
        s.patience = 1;
        assert_eq!(scheduler_epoch_end(&mut s, 0.5), 1e-3);
        assert_eq!(scheduler_epoch_end(&mut s, 0.6), 1e-3);
        assert!((scheduler_epoch_end(&mut s, 0.55) - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn floor() {
        let mut s = state(Scheduler::Step, 1e-5, 1500);
        s.step_size = 1;
        let lrs = run(&mut s, 10);
        assert_eq!(*lrs.last().unwrap(), MIN_LR);
    }
}
