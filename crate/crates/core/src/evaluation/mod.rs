//! Macro F1, leave-one-subject-out orchestration, and result tables.

mod metrics;
mod table;

pub use metrics::{macro_f1, ConfusionMatrix};
pub use table::{compare, Comparison, ComparisonRow, FoldRecord, GroupKey, GroupSummary, ResultTable};

use rayon::prelude::*;

use crate::data::{make_loso_fold, SensorDataset, ValidationPolicy};
use crate::engine::{evaluate, train_fold, Evaluation, FoldTraining};
use crate::error::{Error, Result};
use crate::models::{build_model, ModelSpec};
use crate::protocol::TrainingProtocol;
use crate::util::mix_seed;

const MODEL_STREAM: u64 = 0x0de1;

/// Environment variable bounding the worker pool.
pub const WORKERS_ENV: &str = "HARBENCH_WORKERS";

/// Worker count from `HARBENCH_WORKERS`, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` on a pool of `worker_count()` threads.
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(worker_count()).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Training outcome and test-set evaluation of one (seed, subject) fold.
#[derive(Debug, Clone)]
pub struct FoldRun {
    pub training: FoldTraining,
    pub test: Evaluation,
}

/// Builds the fold for `subject`, trains a freshly initialised model under
/// `protocol` with its seed replaced by `seed`, and evaluates the selected
/// checkpoint on the held-out subject's windows.
pub fn run_fold(
    protocol: &TrainingProtocol,
    dataset: &SensorDataset,
    spec: &ModelSpec,
    seed: u64,
    subject: u32,
) -> Result<FoldRun> {
    let mut protocol = protocol.clone();
    protocol.seed = seed;
    let fold = make_loso_fold(dataset, subject, ValidationPolicy::default(), seed)?;
    let model = build_model(spec, mix_seed(seed, MODEL_STREAM))?;
    let training = train_fold(&protocol, model, &fold)?;
    let test = evaluate(&training.checkpoint, &fold.test)?;
    Ok(FoldRun { training, test })
}

/// Full LOSO cross-validation: every subject is held out once per seed.
/// Fold failures become rows carrying the error instead of aborting the table.
pub fn run_loso(
    protocol: &TrainingProtocol,
    procedure: &str,
    dataset: &SensorDataset,
    spec: &ModelSpec,
    seeds: &[u64],
) -> Result<ResultTable> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    let protocol = protocol.clone().validate()?;
    spec.check()?;
    let jobs: Vec<(u64, u32)> = seeds
        .iter()
        .flat_map(|&s| dataset.subjects().into_iter().map(move |subj| (s, subj)))
        .collect();
    let rows: Vec<FoldRecord> = with_pool(|| {
        jobs.par_iter()
            .map(|&(seed, subject)| {
                let key = RowKey {
                    model: spec.arch.name(),
                    procedure,
                    dataset: &dataset.meta.name,
                    seed,
                    subject,
                };
                key.record(run_fold(&protocol, dataset, spec, seed, subject))
            })
            .collect()
    });
    let mut table = ResultTable::default();
    for row in rows {
        table.push(row);
    }
    Ok(table)
}

struct RowKey<'a> {
    model: &'a str,
    procedure: &'a str,
    dataset: &'a str,
    seed: u64,
    subject: u32,
}

impl RowKey<'_> {
    fn record(self, outcome: Result<FoldRun>) -> FoldRecord {
        let mut row = FoldRecord {
            model: self.model.to_string(),
            procedure: self.procedure.to_string(),
            dataset: self.dataset.to_string(),
            seed: self.seed,
            subject: self.subject,
            macro_f1: None,
            diverged: false,
            error: None,
            confusion: None,
            trace: None,
        };
        match outcome {
            Ok(run) => {
                row.macro_f1 = Some(run.test.macro_f1);
                row.diverged = run.training.trace.diverged();
                row.confusion = Some(run.test.confusion);
                row.trace = Some(run.training.trace);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    }
}
