use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[true][pred]`, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("confusion matrix must be square".into()));
        }
        Ok(Self {
            n_classes: n,
            counts: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_predictions(n_classes: usize, truth: &[usize], predicted: &[usize]) -> Self {
        let mut cm = Self::new(n_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.add(t, p);
        }
        cm
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.n_classes + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Per-class F1 via precision and recall. A class that is never true and
    /// never predicted scores 0.
    pub fn per_class_f1(&self) -> Vec<f64> {
        let n = self.n_classes;
        (0..n)
            .map(|k| {
                let tp = self.get(k, k) as f64;
                let predicted: u64 = (0..n).map(|t| self.get(t, k)).sum();
                let actual: u64 = (0..n).map(|p| self.get(k, p)).sum();
                let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
                let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
                if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                }
            })
            .collect()
    }
}

/// Unweighted mean of the per-class F1 scores.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.n_classes == 0 || cm.total() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let f1 = cm.per_class_f1();
    Ok(f1.iter().sum::<f64>() / f1.len() as f64)
}
