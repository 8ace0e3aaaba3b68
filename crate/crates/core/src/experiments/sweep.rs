use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::SensorDataset;
use crate::engine::TrainingTrace;
use crate::error::{Error, Result};
use crate::evaluation::{run_fold, with_pool};
use crate::models::ModelSpec;
use crate::protocol::{Base, TrainingProtocol, KNOWN_FIELDS};

const DOC_FIELDS: [&str; 4] = ["dataset_description", "model_parameters", "preprocessing", "validation_test"];

/// One factor varied over a frozen baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub baseline: TrainingProtocol,
    pub factor: String,
    pub values: Vec<Value>,
}

/// Which folds back each sweep value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepScope {
    /// The fold holding out the lowest subject id.
    #[default]
    FirstSubject,
    FullLoso,
}

/// Display label of a swept value: strings bare, everything else as JSON.
pub fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Top-level protocol fields whose serialized values differ.
pub fn differing_fields(a: &TrainingProtocol, b: &TrainingProtocol) -> Vec<String> {
    let (Value::Object(a), Value::Object(b)) = (
        serde_json::to_value(a).expect("protocol serializes"),
        serde_json::to_value(b).expect("protocol serializes"),
    ) else {
        unreachable!("protocols serialize to objects")
    };
    let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .filter(|k| a.get(*k) != b.get(*k))
        .cloned()
        .collect()
}

impl SweepSpec {
    pub fn new(baseline: TrainingProtocol, factor: impl Into<String>, values: Vec<Value>) -> Self {
        Self {
            baseline,
            factor: factor.into(),
            values,
        }
    }

    /// One validated protocol per value. Only `factor` is replaced, so any
    /// two of them differ in that field alone.
    pub fn protocols(&self) -> Result<Vec<TrainingProtocol>> {
        if !KNOWN_FIELDS.contains(&self.factor.as_str()) || DOC_FIELDS.contains(&self.factor.as_str()) {
            return Err(Error::InvalidArgument(format!("`{}` is not a sweepable field", self.factor)));
        }
        if self.values.is_empty() {
            return Err(Error::InvalidArgument("a sweep needs at least one value".into()));
        }
        let baseline = self.baseline.clone().validate()?;
        let Value::Object(base) = serde_json::to_value(&baseline)? else {
            unreachable!("protocols serialize to objects")
        };
        let mut out: Vec<TrainingProtocol> = Vec::with_capacity(self.values.len());
        for v in &self.values {
            let mut doc = base.clone();
            doc.insert(self.factor.clone(), v.clone());
            let p: TrainingProtocol = serde_json::from_value(Value::Object(doc))
                .map_err(|e| Error::Parse(format!("{} = {v}: {e}", self.factor)))?;
            let p = p.validate()?;
            if out.iter().any(|q| differing_fields(q, &p).is_empty()) {
                return Err(Error::InvalidArgument(format!("duplicate sweep value {v}")));
            }
            out.push(p);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub value: Value,
    pub seed: u64,
    pub subject: u32,
    pub trace: TrainingTrace,
    /// Test macro F1 of the selected checkpoint.
    pub test_f1: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub factor: String,
    pub values: Vec<Value>,
    pub protocols: Vec<TrainingProtocol>,
    /// Ordered by value, then seed, then subject.
    pub runs: Vec<SweepRun>,
}

pub const SWEEP_TRACE_HEADER: [&str; 12] = [
    "factor",
    "value",
    "seed",
    "subject",
    "epoch",
    "train_loss",
    "val_loss",
    "train_f1",
    "val_f1",
    "lr",
    "checkpoint",
    "diverged",
];

impl SweepResult {
    /// Traces grouped by swept value, in sweep order.
    pub fn families(&self) -> Vec<(String, Vec<TrainingTrace>)> {
        self.values
            .iter()
            .map(|v| {
                let traces = self.runs.iter().filter(|r| &r.value == v).map(|r| r.trace.clone()).collect();
                (value_label(v), traces)
            })
            .collect()
    }

    /// Mean over runs of `value` of the last completed epoch's `quantity`.
    /// `None` if any run of that value diverged or never completed an epoch.
    pub fn final_mean(&self, value: &Value, quantity: Base) -> Option<f64> {
        let runs: Vec<&SweepRun> = self.runs.iter().filter(|r| &r.value == value).collect();
        let mut sum = 0.0;
        for r in &runs {
            if r.trace.diverged() {
                return None;
            }
            sum += r.trace.completed().last()?.value(quantity);
        }
        (!runs.is_empty()).then(|| sum / runs.len() as f64)
    }

    pub fn any_diverged(&self, value: &Value) -> bool {
        self.runs.iter().any(|r| &r.value == value && r.trace.diverged())
    }

    /// Long-format per-epoch rows of every run.
    pub fn traces_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SWEEP_TRACE_HEADER).expect("in-memory write");
        for run in &self.runs {
            for r in &run.trace.records {
                w.write_record([
                    self.factor.clone(),
                    value_label(&run.value),
                    run.seed.to_string(),
                    run.subject.to_string(),
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
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// `factor,value,seed,subject,epochs,stop_reason,selected_epoch,final_val_loss,test_f1`.
    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "factor",
            "value",
            "seed",
            "subject",
            "epochs",
            "stop_reason",
            "selected_epoch",
            "final_val_loss",
            "test_f1",
        ])
        .expect("in-memory write");
        for run in &self.runs {
            let final_val = run.trace.completed().last().map(|r| r.val_loss.to_string()).unwrap_or_default();
            let reason = serde_json::to_value(run.trace.stop_reason).expect("serializes");
            w.write_record([
                self.factor.clone(),
                value_label(&run.value),
                run.seed.to_string(),
                run.subject.to_string(),
                run.trace.records.len().to_string(),
                value_label(&reason),
                run.trace.selected_epoch.to_string(),
                final_val,
                run.test_f1.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

/// Trains once per (value, seed, fold) with every other field frozen to the
/// baseline. Diverged runs stay in the result with their trace flagged.
pub fn run_sweep(
    spec: &SweepSpec,
    dataset: &SensorDataset,
    model_spec: &ModelSpec,
    seeds: &[u64],
    scope: SweepScope,
) -> Result<SweepResult> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    model_spec.check()?;
    let protocols = spec.protocols()?;
    let subjects = match scope {
        SweepScope::FirstSubject => dataset.subjects().into_iter().take(1).collect(),
        SweepScope::FullLoso => dataset.subjects(),
    };
    let mut jobs = Vec::new();
    for (i, _) in protocols.iter().enumerate() {
        for &seed in seeds {
            for &subject in &subjects {
                jobs.push((i, seed, subject));
            }
        }
    }
    let runs: Vec<Result<SweepRun>> = with_pool(|| {
        jobs.par_iter()
            .map(|&(i, seed, subject)| {
                let run = run_fold(&protocols[i], dataset, model_spec, seed, subject)?;
                Ok(SweepRun {
                    value: spec.values[i].clone(),
                    seed,
                    subject,
                    trace: run.training.trace,
                    test_f1: run.test.macro_f1,
                })
            })
            .collect()
    });
    Ok(SweepResult {
        factor: spec.factor.clone(),
        values: spec.values.clone(),
        protocols,
        runs: runs.into_iter().collect::<Result<_>>()?,
    })
}
