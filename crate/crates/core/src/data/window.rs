use crate::error::{Error, Result};

/// Segmentation stride: `window_length × (1 − overlap)` rounded half-up, at
/// least 1. A 1e-9 slack absorbs binary representation error in the product
/// (`128 × 0.1` must round like the decimal value).
pub fn stride_for(window_length: usize, overlap_fraction: f64) -> usize {
    let raw = window_length as f64 * (1.0 - overlap_fraction);
    ((raw + 0.5 + 1e-9).floor() as usize).max(1)
}

/// Start indices of all complete windows. The trailing partial window is
/// dropped.
pub fn sliding_windows(
    series_length: usize,
    window_length: usize,
    overlap_fraction: f64,
) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::InvalidArgument(format!(
            "overlap fraction {overlap_fraction} must lie in [0, 1)"
        )));
    }
    if window_length == 0 {
        return Err(Error::InvalidArgument("window length must be positive".into()));
    }
    if window_length > series_length {
        return Err(Error::WindowTooLong {
            window_length,
            series_length,
        });
    }
    let stride = stride_for(window_length, overlap_fraction);
    Ok((0..=series_length - window_length).step_by(stride).collect())
}

/// Majority label of a window. Ties go to the last timestep's label when it is
/// among the tied labels, otherwise to whichever tied label occurs latest.
pub fn window_label(labels: &[usize]) -> usize {
    assert!(!labels.is_empty(), "window has no labels");
    let n = labels.iter().copied().max().unwrap() + 1;
    let mut counts = vec![0usize; n];
    let mut last_seen = vec![0usize; n];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        last_seen[l] = i;
    }
    let top = *counts.iter().max().unwrap();
    (0..n)
        .filter(|&l| counts[l] == top)
        .max_by_key(|&l| last_seen[l])
        .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(series: usize, window: usize, stride: usize) -> Vec<usize> {
        let mut starts = Vec::new();
        let mut s = 0;
        loop {
            if s + window > series {
                break;
            }
            starts.push(s);
            s += stride;
        }
        starts
    }

    #[test]
    fn half_overlap_on_thousand() {
        assert_eq!(stride_for(128, 0.5), 64);
        let w = sliding_windows(1000, 128, 0.5).unwrap();
        assert_eq!(w.len(), 14);
        assert_eq!(*w.last().unwrap(), 832);
    }

    #[test]
    fn ninety_percent_overlap_on_thousand() {
        assert_eq!(stride_for(128, 0.9), 13);
        assert_eq!(sliding_windows(1000, 128, 0.9).unwrap().len(), 68);
    }

    #[test]
    fn window_equal_to_series() {
        assert_eq!(sliding_windows(128, 128, 0.5).unwrap(), vec![0]);
    }

    #[test]
    fn too_long() {
        assert!(matches!(
            sliding_windows(100, 128, 0.5),
            Err(Error::WindowTooLong { window_length: 128, series_length: 100 })
        ));
        assert!(sliding_windows(100, 10, 1.0).is_err());
        assert!(sliding_windows(100, 10, -0.1).is_err());
    }

    #[test]
    fn minimum_stride_is_one() {
        assert_eq!(stride_for(5, 0.99), 1);
        assert_eq!(stride_for(5, 0.9), 1);
        assert_eq!(stride_for(5, 0.5), 3);
    }

    #[test]
    fn labels() {
        assert_eq!(window_label(&[1, 1, 1, 2]), 1);
        assert_eq!(window_label(&[1, 1, 2, 2]), 2);
        assert_eq!(window_label(&[3, 3, 3, 3]), 3);
        assert_eq!(window_label(&[2, 2, 1, 1]), 1);
        assert_eq!(window_label(&[1, 1, 2, 2, 0]), 2);
    }

    proptest! {
        #[test]
        fn matches_enumeration(series in 1usize..3000, window in 1usize..400, overlap in 0.0f64..0.99) {
            prop_assume!(window <= series);
            let starts = sliding_windows(series, window, overlap).unwrap();
            prop_assert_eq!(starts, brute_force(series, window, stride_for(window, overlap)));
        }
    }
}
