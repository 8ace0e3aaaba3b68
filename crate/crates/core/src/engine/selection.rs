use crate::protocol::SelectionBase;

use super::trace::TrainingTrace;

/// Epoch the final model is taken from. `LAST` is the final completed
/// epoch; loss bases pick the argmin and metric bases the argmax, earliest
/// epoch on ties. Diverged and non-finite records are skipped. `None` when no
/// epoch completed.
pub fn select_model(trace: &TrainingTrace, base: SelectionBase) -> Option<usize> {
    let Some(monitored) = base.monitored() else {
        return trace.completed().last().map(|r| r.epoch);
    };
    let lower = monitored.lower_is_better();
    let mut best: Option<(usize, f64)> = None;
    for r in trace.completed() {
        let v = r.value(monitored);
        if !v.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, b)) => {
                if lower {
                    v < b
                } else {
                    v > b
                }
            }
        };
        if better {
            best = Some((r.epoch, v));
        }
    }
    best.map(|(e, _)| e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::trace::{EpochRecord, StopReason};

    fn trace_with(val_loss: &[f64], val_f1: &[f64]) -> TrainingTrace {
        TrainingTrace {
            records: val_loss
                .iter()
                .zip(val_f1)
                .enumerate()
                .map(|(i, (&l, &f))| EpochRecord {
                    epoch: i + 1,
                    train_loss: l,
                    val_loss: l,
                    train_f1: f,
                    val_f1: f,
                    lr: 1e-3,
                    checkpoint_saved: false,
                    diverged: false,
                })
                .collect(),
            selected_epoch: 0,
            stop_reason: StopReason::MaxEpoch,
        }
    }

    #[test]
    fn last() {
        let t = trace_with(&[0.5; 37], &[0.1; 37]);
        assert_eq!(select_model(&t, SelectionBase::Last), Some(37));
    }

    #[test]
    fn argmin_with_earliest_tie() {
        let t = trace_with(&[0.9, 0.7, 0.7, 0.8], &[0.0; 4]);
        assert_eq!(select_model(&t, SelectionBase::ValLoss), Some(2));
    }

    #[test]
    fn argmax_metric() {
        let t = trace_with(&[1.0; 3], &[0.1, 0.4, 0.3]);
        assert_eq!(select_model(&t, SelectionBase::ValMetric), Some(2));
    }

    #[test]
    fn skips_diverged() {
        let mut t = trace_with(&[0.9, 0.1], &[0.2, 0.9]);
        t.records[1].diverged = true;
        assert_eq!(select_model(&t, SelectionBase::ValLoss), Some(1));
        assert_eq!(select_model(&t, SelectionBase::Last), Some(1));
        t.records[0].diverged = true;
        assert_eq!(select_model(&t, SelectionBase::Last), None);
    }
}
