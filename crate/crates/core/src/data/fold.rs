use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sliding_windows, window_label, Recording, SensorDataset, TEST_OVERLAP, TRAIN_OVERLAP};
use crate::error::{Error, Result};
use crate::util::mix_seed;

const SPLIT_STREAM: u64 = 0x5b11;

/// A segmented, labelled window (`window_length × n_channels`).
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub data: Array2<f64>,
    pub label: usize,
    pub subject: u32,
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    /// Per-channel mean and population standard deviation over every row of
    /// every window. Constant channels get a unit scale.
    pub fn from_windows(windows: &[Window]) -> Self {
        let c = windows.first().map_or(0, |w| w.data.ncols());
        let mut sum = vec![0.0; c];
        let mut n = 0usize;
        for w in windows {
            for row in w.data.rows() {
                for (s, v) in sum.iter_mut().zip(row) {
                    *s += v;
                }
            }
            n += w.data.nrows();
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n.max(1) as f64).collect();
        let mut sq = vec![0.0; c];
        for w in windows {
            for row in w.data.rows() {
                for ((q, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                    *q += (v - m) * (v - m);
                }
            }
        }
        let std = sq
            .iter()
            .map(|q| {
                let s = (q / n.max(1) as f64).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, window: &mut Window) {
        for mut row in window.data.axis_iter_mut(Axis(0)) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationPolicy {
    /// Fraction of each class's non-test windows held out for validation.
    pub fraction: f64,
}

impl Default for ValidationPolicy {
    fn default() -> Self {
        Self { fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSplit {
    pub fold_subject: u32,
    pub window_length: usize,
    pub n_channels: usize,
    pub n_classes: usize,
    pub train: Vec<Window>,
    pub val: Vec<Window>,
    pub test: Vec<Window>,
    pub normalization: NormalizationStats,
}

fn segment(rec: &Recording, window_length: usize, overlap: f64) -> Vec<Window> {
    // Recordings shorter than one window contribute nothing.
    let Ok(starts) = sliding_windows(rec.len(), window_length, overlap) else {
        return Vec::new();
    };
    starts
        .into_iter()
        .map(|s| Window {
            data: rec.samples.slice(ndarray::s![s..s + window_length, ..]).to_owned(),
            label: window_label(&rec.labels[s..s + window_length]),
            subject: rec.subject,
            start: s,
        })
        .collect()
}

/// Builds the leave-one-subject-out fold holding out `fold_subject`.
///
/// Test windows come from the held-out subject at 90% overlap; training and
/// validation windows come from every other subject at 50% overlap. The
/// validation set is a seeded, class-stratified fraction of those windows.
/// Z-score statistics are computed on the training windows only and applied
/// to all three sets.
pub fn make_loso_fold(
    dataset: &SensorDataset,
    fold_subject: u32,
    policy: ValidationPolicy,
    seed: u64,
) -> Result<WindowedSplit> {
    if !(0.0..1.0).contains(&policy.fraction) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction {} must lie in [0, 1)",
            policy.fraction
        )));
    }
    let meta = &dataset.meta;
    let held_out = dataset
        .recording(fold_subject)
        .ok_or(Error::UnknownSubject(fold_subject))?;

    let mut test = segment(held_out, meta.window_length, TEST_OVERLAP);

    let mut by_class: Vec<Vec<Window>> = vec![Vec::new(); meta.n_classes];
    for rec in dataset.recordings().iter().filter(|r| r.subject != fold_subject) {
        for w in segment(rec, meta.window_length, TRAIN_OVERLAP) {
            by_class[w.label].push(w);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, SPLIT_STREAM));
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (class, mut windows) in by_class.into_iter().enumerate() {
        if windows.is_empty() {
            return Err(Error::EmptyClass(class));
        }
        windows.shuffle(&mut rng);
        let n = windows.len();
        let n_val = ((policy.fraction * n as f64).round() as usize).min(n - 1);
        let rest = windows.split_off(n_val);
        val.extend(windows);
        train.extend(rest);
    }
    let order = |w: &Window| (w.subject, w.start);
    train.sort_by_key(order);
    val.sort_by_key(order);

    let normalization = NormalizationStats::from_windows(&train);
    for w in train.iter_mut().chain(val.iter_mut()).chain(test.iter_mut()) {
        normalization.apply(w);
    }
    Ok(WindowedSplit {
        fold_subject,
        window_length: meta.window_length,
        n_channels: meta.n_channels,
        n_classes: meta.n_classes,
        train,
        val,
        test,
        normalization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticConfig};

    fn dataset() -> SensorDataset {
        generate_synthetic(&SyntheticConfig::default()).unwrap()
    }

    #[test]
    fn held_out_subject_only_in_test() {
        let ds = dataset();
        for s in ds.subjects() {
            let f = make_loso_fold(&ds, s, ValidationPolicy::default(), 0).unwrap();
            assert!(!f.test.is_empty());
            assert!(f.test.iter().all(|w| w.subject == s));
            assert!(f.train.iter().chain(&f.val).all(|w| w.subject != s));
            for w in f.train.iter().chain(&f.val).chain(&f.test) {
                assert_eq!(w.data.dim(), (32, 3));
                assert!(w.label < 4);
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let ds = dataset();
        let a = make_loso_fold(&ds, 0, ValidationPolicy::default(), 0).unwrap();
        let b = make_loso_fold(&ds, 0, ValidationPolicy::default(), 0).unwrap();
        assert_eq!(a, b);
        let c = make_loso_fold(&ds, 0, ValidationPolicy::default(), 1).unwrap();
        assert_ne!(a.val, c.val);
    }

    #[test]
    fn validation_is_stratified() {
        let ds = dataset();
        let f = make_loso_fold(&ds, 2, ValidationPolicy::default(), 0).unwrap();
        for k in 0..4 {
            let nv = f.val.iter().filter(|w| w.label == k).count();
            let nt = f.train.iter().filter(|w| w.label == k).count();
            assert_eq!(nv, (0.2 * (nv + nt) as f64).round() as usize);
        }
    }

    #[test]
    fn training_windows_are_standardized() {
        let ds = dataset();
        let f = make_loso_fold(&ds, 0, ValidationPolicy::default(), 0).unwrap();
        let renorm = NormalizationStats::from_windows(&f.train);
        for (m, s) in renorm.mean.iter().zip(&renorm.std) {
            assert!(m.abs() < 1e-9);
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unknown_subject() {
        assert!(matches!(
            make_loso_fold(&dataset(), 99, ValidationPolicy::default(), 0),
            Err(Error::UnknownSubject(99))
        ));
    }

    #[test]
    fn missing_class_in_training() {
        let mut ds = dataset();
        // Only subject 0 keeps class 3; holding it out leaves no class-3 training window.
        for s in 1..6 {
            let rec = ds.recording_mut(s).unwrap();
            for l in rec.labels.iter_mut() {
                if *l == 3 {
                    *l = 0;
                }
            }
        }
        assert!(matches!(
            make_loso_fold(&ds, 0, ValidationPolicy::default(), 0),
            Err(Error::EmptyClass(3))
        ));
    }
}
