use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::Base;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_f1: f64,
    pub val_f1: f64,
    /// Rate used during this epoch.
    pub lr: f64,
    pub checkpoint_saved: bool,
    pub diverged: bool,
}

impl EpochRecord {
    pub fn value(&self, base: Base) -> f64 {
        match base {
            Base::TrainLoss => self.train_loss,
            Base::ValLoss => self.val_loss,
            Base::TrainMetric => self.train_f1,
            Base::ValMetric => self.val_f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpoch,
    EarlyStopping,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters form the returned checkpoint; 0 means the
    /// initial parameters (the run diverged in its first epoch).
    pub selected_epoch: usize,
    pub stop_reason: StopReason,
}

pub const TRACE_HEADER: [&str; 8] = [
    "epoch",
    "train_loss",
    "val_loss",
    "train_f1",
    "val_f1",
    "lr",
    "checkpoint",
    "diverged",
];

impl TrainingTrace {
    pub fn diverged(&self) -> bool {
        self.stop_reason == StopReason::Diverged
    }

    /// Records of completed (non-diverged) epochs.
    pub fn completed(&self) -> impl Iterator<Item = &EpochRecord> {
        self.records.iter().filter(|r| !r.diverged)
    }

    pub fn record(&self, epoch: usize) -> Option<&EpochRecord> {
        self.records.iter().find(|r| r.epoch == epoch)
    }

    /// `epoch,train_loss,val_loss,train_f1,val_f1,lr,checkpoint,diverged`;
    /// flags are 0/1, floats use the shortest round-trip representation.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TRACE_HEADER).expect("in-memory write");
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.val_loss.to_string(),
                r.train_f1.to_string(),
                r.val_f1.to_string(),
                r.lr.to_string(),
                u8::from(r.checkpoint_saved).to_string(),
                u8::from(r.diverged).to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Parses the per-epoch rows written by [`TrainingTrace::to_csv`].
    pub fn records_from_csv(reader: impl Read) -> Result<Vec<EpochRecord>> {
        let mut r = csv::Reader::from_reader(reader);
        if r.headers()?.iter().ne(TRACE_HEADER) {
            return Err(Error::Parse("unexpected trace header".into()));
        }
        let mut out = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| Error::Parse(format!("bad number `{}`", &rec[i])))
            };
            let flag = |i: usize| -> Result<bool> {
                match &rec[i] {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(Error::Parse(format!("bad flag `{other}`"))),
                }
            };
            out.push(EpochRecord {
                epoch: rec[0].parse().map_err(|_| Error::Parse("bad epoch".into()))?,
                train_loss: f(1)?,
                val_loss: f(2)?,
                train_f1: f(3)?,
                val_f1: f(4)?,
                lr: f(5)?,
                checkpoint_saved: flag(6)?,
                diverged: flag(7)?,
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let trace = TrainingTrace {
            records: vec![
                EpochRecord {
                    epoch: 1,
                    train_loss: 1.25,
                    val_loss: 0.1 + 0.2,
                    train_f1: 0.5,
                    val_f1: 1.0 / 3.0,
                    lr: 1e-3,
                    checkpoint_saved: true,
                    diverged: false,
                },
                EpochRecord {
                    epoch: 2,
                    train_loss: f64::NAN,
                    val_loss: f64::NAN,
                    train_f1: f64::NAN,
                    val_f1: f64::NAN,
                    lr: 1e-3,
                    checkpoint_saved: false,
                    diverged: true,
                },
            ],
            selected_epoch: 1,
            stop_reason: StopReason::Diverged,
        };
        let text = trace.to_csv();
        assert!(text.starts_with("epoch,train_loss,val_loss,train_f1,val_f1,lr,checkpoint,diverged\n1,1.25,"));
        let back = TrainingTrace::records_from_csv(text.as_bytes()).unwrap();
        assert_eq!(back[0], trace.records[0]);
        assert!(back[1].diverged && back[1].train_loss.is_nan());
    }
}
