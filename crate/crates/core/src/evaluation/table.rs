use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::ConfusionMatrix;
use crate::engine::TrainingTrace;

/// Outcome of one (model, procedure, dataset, seed, subject) fold-run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub model: String,
    pub procedure: String,
    pub dataset: String,
    pub seed: u64,
    pub subject: u32,
    /// Test macro F1 of the selected checkpoint; `None` when the run failed.
    pub macro_f1: Option<f64>,
    pub diverged: bool,
    pub error: Option<String>,
    pub confusion: Option<ConfusionMatrix>,
    pub trace: Option<TrainingTrace>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupKey {
    pub model: String,
    pub procedure: String,
    pub dataset: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    /// Per-fold-per-seed scores in insertion order.
    pub values: Vec<f64>,
    pub n_failed: usize,
    pub n_diverged: usize,
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub std: Option<f64>,
}

/// Append-only collection of fold results.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    rows: Vec<FoldRecord>,
}

pub const RESULTS_HEADER: [&str; 7] = ["model", "procedure", "dataset", "seed", "subject", "macro_f1", "diverged"];
pub const SUMMARY_HEADER: [&str; 8] = [
    "model",
    "procedure",
    "dataset",
    "n_runs",
    "n_failed",
    "n_diverged",
    "mean_macro_f1",
    "std_macro_f1",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

impl ResultTable {
    pub fn push(&mut self, row: FoldRecord) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: ResultTable) {
        self.rows.extend(other.rows);
    }

    pub fn rows(&self) -> &[FoldRecord] {
        &self.rows
    }

    pub fn groups(&self) -> BTreeMap<GroupKey, GroupSummary> {
        let mut out: BTreeMap<GroupKey, GroupSummary> = BTreeMap::new();
        for r in &self.rows {
            let key = GroupKey {
                model: r.model.clone(),
                procedure: r.procedure.clone(),
                dataset: r.dataset.clone(),
            };
            let g = out.entry(key).or_insert_with(|| GroupSummary {
                values: Vec::new(),
                n_failed: 0,
                n_diverged: 0,
                mean: None,
                std: None,
            });
            match r.macro_f1 {
                Some(v) => g.values.push(v),
                None => g.n_failed += 1,
            }
            g.n_diverged += usize::from(r.diverged);
        }
        for g in out.values_mut() {
            if !g.values.is_empty() {
                let n = g.values.len() as f64;
                let mean = g.values.iter().sum::<f64>() / n;
                let var = g.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                g.mean = Some(mean);
                g.std = Some(var.sqrt());
            }
        }
        out
    }

    /// `model,procedure,dataset,seed,subject,macro_f1,diverged`; a failed
    /// run leaves `macro_f1` empty.
    pub fn results_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(RESULTS_HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                r.procedure.clone(),
                r.dataset.clone(),
                r.seed.to_string(),
                r.subject.to_string(),
                opt(r.macro_f1),
                u8::from(r.diverged).to_string(),
            ])
            .expect("in-memory write");
        }
        finish_csv(w)
    }

    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SUMMARY_HEADER).expect("in-memory write");
        for (k, g) in self.groups() {
            w.write_record([
                k.model,
                k.procedure,
                k.dataset,
                (g.values.len() + g.n_failed).to_string(),
                g.n_failed.to_string(),
                g.n_diverged.to_string(),
                opt(g.mean),
                opt(g.std),
            ])
            .expect("in-memory write");
        }
        finish_csv(w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub model: String,
    pub dataset: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    /// Procedure with the strictly higher mean; `None` on ties or when a
    /// cell is absent.
    pub better: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub procedure_a: String,
    pub procedure_b: String,
    pub rows: Vec<ComparisonRow>,
}

/// Pairs the mean macro F1 of two procedures for every (model, dataset)
/// present for either one.
pub fn compare(table: &ResultTable, procedure_a: &str, procedure_b: &str) -> Comparison {
    let groups = table.groups();
    let cells: BTreeSet<(String, String)> = groups
        .keys()
        .filter(|k| k.procedure == procedure_a || k.procedure == procedure_b)
        .map(|k| (k.model.clone(), k.dataset.clone()))
        .collect();
    let mean = |model: &str, dataset: &str, procedure: &str| {
        groups
            .get(&GroupKey {
                model: model.to_string(),
                procedure: procedure.to_string(),
                dataset: dataset.to_string(),
            })
            .and_then(|g| g.mean)
    };
    let rows = cells
        .into_iter()
        .map(|(model, dataset)| {
            let a = mean(&model, &dataset, procedure_a);
            let b = mean(&model, &dataset, procedure_b);
            let better = match (a, b) {
                (Some(x), Some(y)) if x > y => Some(procedure_a.to_string()),
                (Some(x), Some(y)) if y > x => Some(procedure_b.to_string()),
                _ => None,
            };
            ComparisonRow {
                model,
                dataset,
                a,
                b,
                better,
            }
        })
        .collect();
    Comparison {
        procedure_a: procedure_a.to_string(),
        procedure_b: procedure_b.to_string(),
        rows,
    }
}

impl Comparison {
    /// `model,dataset,<a>,<b>,better`; absent cells are empty.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model", "dataset", &self.procedure_a, &self.procedure_b, "better"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                r.dataset.clone(),
                opt(r.a),
                opt(r.b),
                r.better.clone().unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        finish_csv(w)
    }

    /// Aligned plain-text table; the better value carries a trailing `*`
    /// and absent cells read `-`.
    pub fn to_text(&self) -> String {
        let cell = |v: Option<f64>, flagged: bool| match v {
            Some(x) => format!("{x:.3}{}", if flagged { "*" } else { " " }),
            None => "-".to_string(),
        };
        let mut table = vec![[
            "model".to_string(),
            "dataset".to_string(),
            self.procedure_a.clone(),
            self.procedure_b.clone(),
        ]];
        for r in &self.rows {
            let flag = |p: &str| r.better.as_deref() == Some(p);
            table.push([
                r.model.clone(),
                r.dataset.clone(),
                cell(r.a, flag(&self.procedure_a)),
                cell(r.b, flag(&self.procedure_b) && self.procedure_a != self.procedure_b),
            ]);
        }
        let widths: Vec<usize> = (0..4).map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in &table {
            let line: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}
