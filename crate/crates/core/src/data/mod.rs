//! Per-subject sensor recordings, segmentation and LOSO folds.

mod fold;
mod io;
mod synthetic;
mod window;

use std::collections::{BTreeSet, HashSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fold::{make_loso_fold, NormalizationStats, ValidationPolicy, Window, WindowedSplit};
pub use io::{load_dataset, load_dataset_with_meta, save_dataset};
pub use synthetic::{generate_synthetic, SyntheticConfig};
pub use window::{sliding_windows, stride_for, window_label};

/// Overlap between adjacent training and validation windows.
pub const TRAIN_OVERLAP: f64 = 0.5;
/// Overlap between adjacent test windows.
pub const TEST_OVERLAP: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub n_subjects: usize,
    pub n_channels: usize,
    /// Samples per window.
    pub window_length: usize,
    pub n_classes: usize,
    pub sensor_types: BTreeSet<String>,
    /// Hz.
    pub sampling_freq: f64,
}

impl DatasetMeta {
    pub fn check(&self) -> Result<()> {
        if self.n_subjects == 0
            || self.n_channels == 0
            || self.window_length == 0
            || self.n_classes == 0
            || !(self.sampling_freq > 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "dataset meta `{}` must have positive sizes and frequency",
                self.name
            )));
        }
        Ok(())
    }

    /// Metadata of one of the five standard benchmarks (DSADS, HAPT, OPPO,
    /// PAMAP2, RW/RWHAR). Case-insensitive.
    pub fn benchmark(name: &str) -> Option<DatasetMeta> {
        let (name, subjects, channels, length, classes, sensors, freq): (
            &str,
            usize,
            usize,
            usize,
            usize,
            &[&str],
            f64,
        ) = match name.to_ascii_uppercase().as_str() {
            "DSADS" => ("DSADS", 8, 45, 126, 19, &["acc", "gyro", "mag"], 25.0),
            "HAPT" => ("HAPT", 30, 6, 128, 12, &["acc", "gyro"], 50.0),
            "OPPO" => ("OPPO", 4, 77, 30, 18, &["acc", "gyro", "mag"], 30.0),
            "PAMAP2" => ("PAMAP2", 9, 18, 168, 12, &["acc", "gyro"], 100.0),
            "RW" | "RWHAR" => ("RWHAR", 15, 21, 128, 8, &["acc"], 50.0),
            _ => return None,
        };
        Some(DatasetMeta {
            name: name.to_string(),
            n_subjects: subjects,
            n_channels: channels,
            window_length: length,
            n_classes: classes,
            sensor_types: sensors.iter().map(|s| s.to_string()).collect(),
            sampling_freq: freq,
        })
    }
}

pub const BENCHMARK_NAMES: [&str; 5] = ["DSADS", "HAPT", "OPPO", "PAMAP2", "RWHAR"];

/// One subject's continuous recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject: u32,
    /// timestep × channel
    pub samples: Array2<f64>,
    /// One class label per timestep.
    pub labels: Vec<usize>,
}

impl Recording {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorDataset {
    pub meta: DatasetMeta,
    recordings: Vec<Recording>,
}

impl SensorDataset {
    /// Builds a dataset, checking subject uniqueness, channel counts and
    /// label ranges. Recordings are kept sorted by subject id.
    pub fn new(meta: DatasetMeta, mut recordings: Vec<Recording>) -> Result<Self> {
        meta.check()?;
        let mut seen = HashSet::new();
        for r in &recordings {
            if !seen.insert(r.subject) {
                return Err(Error::InvalidArgument(format!("duplicate subject {}", r.subject)));
            }
            if r.samples.ncols() != meta.n_channels {
                return Err(Error::Shape(format!(
                    "subject {} has {} channels, expected {}",
                    r.subject,
                    r.samples.ncols(),
                    meta.n_channels
                )));
            }
            if r.samples.nrows() != r.labels.len() {
                return Err(Error::Shape(format!(
                    "subject {} has {} samples but {} labels",
                    r.subject,
                    r.samples.nrows(),
                    r.labels.len()
                )));
            }
            if let Some(&bad) = r.labels.iter().find(|&&l| l >= meta.n_classes) {
                return Err(Error::InvalidArgument(format!(
                    "subject {} has label {bad} outside [0, {})",
                    r.subject, meta.n_classes
                )));
            }
        }
        if recordings.len() != meta.n_subjects {
            return Err(Error::InvalidArgument(format!(
                "meta declares {} subjects but {} recordings were given",
                meta.n_subjects,
                recordings.len()
            )));
        }
        recordings.sort_by_key(|r| r.subject);
        Ok(Self { meta, recordings })
    }

    pub fn recordings(&self) -> &[Recording] {
        &self.recordings
    }

    pub fn subjects(&self) -> Vec<u32> {
        self.recordings.iter().map(|r| r.subject).collect()
    }

    pub fn recording(&self, subject: u32) -> Option<&Recording> {
        self.recordings.iter().find(|r| r.subject == subject)
    }

    /// Mutable access for tests that perturb a subject.
    pub fn recording_mut(&mut self, subject: u32) -> Option<&mut Recording> {
        self.recordings.iter_mut().find(|r| r.subject == subject)
    }
}
