use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::early_stop::EarlyStopState;
use super::optimizer::{optimizer_step, OptimizerState};
use super::scheduler::{scheduler_epoch_end, SchedulerState};
use super::trace::{EpochRecord, StopReason, TrainingTrace};
use crate::data::{Window, WindowedSplit};
use crate::error::{Error, Result};
use crate::evaluation::{macro_f1, ConfusionMatrix};
use crate::models::{cross_entropy, loss_and_grads, Model};
use crate::protocol::TrainingProtocol;
use crate::util::mix_seed;

const SHUFFLE_STREAM: u64 = 0x5f1e;
const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
}

fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy and macro F1 of `model` on `windows`.
pub fn evaluate(model: &Model, windows: &[Window]) -> Result<Evaluation> {
    let n_classes = model.spec().n_classes;
    let mut confusion = ConfusionMatrix::new(n_classes);
    let mut total = 0.0;
    for chunk in windows.chunks(EVAL_BATCH) {
        let inputs: Vec<ArrayView2<f64>> = chunk.iter().map(|w| w.data.view()).collect();
        let labels: Vec<usize> = chunk.iter().map(|w| w.label).collect();
        let logits = model.forward(&inputs)?;
        total += cross_entropy(&logits, &labels).iter().sum::<f64>();
        for (row, &l) in logits.rows().into_iter().zip(&labels) {
            confusion.add(l, argmax(row));
        }
    }
    Ok(Evaluation {
        loss: total / windows.len().max(1) as f64,
        macro_f1: macro_f1(&confusion)?,
        confusion,
    })
}

#[derive(Debug, Clone)]
pub struct FoldTraining {
    pub trace: TrainingTrace,
    /// Parameters at `trace.selected_epoch`.
    pub checkpoint: Model,
}

fn check_fold(model: &Model, fold: &WindowedSplit) -> Result<()> {
    let spec = model.spec();
    if (spec.window_length, spec.n_channels, spec.n_classes)
        != (fold.window_length, fold.n_channels, fold.n_classes)
    {
        return Err(Error::Config(format!(
            "model expects ({}, {}) windows with {} classes, fold has ({}, {}) with {}",
            spec.window_length, spec.n_channels, spec.n_classes, fold.window_length, fold.n_channels, fold.n_classes
        )));
    }
    if fold.val.is_empty() {
        return Err(Error::Config("fold has no validation windows".into()));
    }
    let mut seen = vec![false; fold.n_classes];
    for w in &fold.train {
        seen[w.label] = true;
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::Config(format!("class {k} is absent from the training windows")));
    }
    Ok(())
}

/// Runs one training procedure on one fold.
///
/// Each epoch visits the training windows in a seeded shuffled order, in
/// mini-batches of `batch_size` (the final short batch is kept). Training
/// loss and macro F1 are accumulated from the forward passes of the epoch.
/// At the end of every epoch: validation loss and macro F1 are computed, the
/// checkpoint is refreshed if the selection base improved, then the scheduler
/// and early stopping are updated. A non-finite loss or update ends the run,
/// flags the trace as diverged and returns the best checkpoint so far.
pub fn train_fold(protocol: &TrainingProtocol, mut model: Model, fold: &WindowedSplit) -> Result<FoldTraining> {
    let protocol = protocol.clone().validate()?;
    check_fold(&model, fold)?;

    let n_classes = fold.n_classes;
    let selection = protocol.model_selection_base.monitored();
    let scheduler_base = protocol.scheduler_base_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(protocol.seed, SHUFFLE_STREAM));
    let mut optimizer = OptimizerState::new(protocol.optimizer, model.params());
    let mut scheduler = SchedulerState::new(&protocol);
    let mut early = protocol
        .early_stopping_rule()
        .map(|(base, patience)| EarlyStopState::new(base, patience));

    let mut checkpoint = model.clone();
    let mut selected_epoch = 0;
    let mut best_selection: Option<f64> = None;
    let mut records = Vec::new();
    let mut stop_reason = StopReason::MaxEpoch;
    let mut order: Vec<usize> = (0..fold.train.len()).collect();
    let batch_size = protocol.batch_size as usize;

    for epoch in 1..=protocol.max_epoch as usize {
        let lr = scheduler.lr();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut confusion = ConfusionMatrix::new(n_classes);
        let mut diverged = false;
        for batch in order.chunks(batch_size) {
            let inputs: Vec<ArrayView2<f64>> = batch.iter().map(|&i| fold.train[i].data.view()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| fold.train[i].label).collect();
            let out = match loss_and_grads(&model, &inputs, &labels) {
                Ok(out) => out,
                Err(Error::Numerical(_)) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            loss_sum += out.loss * batch.len() as f64;
            for (row, &l) in out.logits.rows().into_iter().zip(&labels) {
                confusion.add(l, argmax(row));
            }
            match optimizer_step(model.params_mut(), &out.grads, lr, protocol.weight_decay, &mut optimizer) {
                Ok(()) => {}
                Err(Error::NonFiniteUpdate(_)) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }

        let val = if diverged { None } else { Some(evaluate(&model, &fold.val)?) };
        let Some(val) = val.filter(|v| v.loss.is_finite()) else {
            records.push(EpochRecord {
                epoch,
                train_loss: f64::NAN,
                val_loss: f64::NAN,
                train_f1: f64::NAN,
                val_f1: f64::NAN,
                lr,
                checkpoint_saved: false,
                diverged: true,
            });
            stop_reason = StopReason::Diverged;
            break;
        };

        let mut record = EpochRecord {
            epoch,
            train_loss: loss_sum / fold.train.len() as f64,
            val_loss: val.loss,
            train_f1: macro_f1(&confusion)?,
            val_f1: val.macro_f1,
            lr,
            checkpoint_saved: false,
            diverged: false,
        };

        // Same rule as `select_model`: strictly better, earliest epoch wins ties.
        let improved = match selection {
            None => true,
            Some(base) => {
                let v = record.value(base);
                v.is_finite()
                    && best_selection.is_none_or(|b| if base.lower_is_better() { v < b } else { v > b })
            }
        };
        if improved {
            if let Some(base) = selection {
                best_selection = Some(record.value(base));
            }
            checkpoint = model.clone();
            selected_epoch = epoch;
            record.checkpoint_saved = true;
        }

        scheduler_epoch_end(&mut scheduler, record.value(scheduler_base));
        let stop = early.as_mut().is_some_and(|es| {
            es.update(record.value(es.base), epoch);
            es.stopped
        });
        records.push(record);
        if stop {
            stop_reason = StopReason::EarlyStopping;
            break;
        }
    }

    Ok(FoldTraining {
        trace: TrainingTrace {
            records,
            selected_epoch,
            stop_reason,
        },
        checkpoint,
    })
}
