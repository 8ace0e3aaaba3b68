#![allow(dead_code)]

use harbench::models::{build_model, loss_and_grads, Arch, Model, ModelSpec};
use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn random_batch(n: usize, t: usize, c: usize, seed: u64) -> Vec<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Array2::from_shape_fn((t, c), |_| StandardNormal.sample(&mut rng)))
        .collect()
}

#[derive(Debug)]
pub struct GradCheck {
    pub checked: usize,
    /// Coordinates whose one-sided differences disagree, i.e. a ReLU or
    /// max-pool switch falls inside the step.
    pub kinks: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

fn loss(model: &Model, xs: &[ArrayView2<f64>], labels: &[usize]) -> f64 {
    loss_and_grads(model, xs, labels).unwrap().loss
}

/// Central finite differences of the mean cross-entropy against the analytic
/// gradient, over every parameter of `model`.
pub fn gradient_check(model: &Model, xs: &[Array2<f64>], labels: &[usize], h: f64) -> GradCheck {
    let views: Vec<ArrayView2<f64>> = xs.iter().map(|x| x.view()).collect();
    let analytic = loss_and_grads(model, &views, labels).unwrap().grads.flat();
    let names: Vec<String> = model
        .params()
        .tensors()
        .iter()
        .flat_map(|t| (0..t.data.len()).map(move |i| format!("{}[{i}]", t.name)))
        .collect();
    let base = loss(model, &views, labels);
    let mut probe = model.clone();
    let mut out = GradCheck {
        checked: 0,
        kinks: 0,
        max_rel_err: 0.0,
        worst: String::new(),
    };
    for (k, &a) in analytic.iter().enumerate() {
        let orig = *probe.params_mut().scalar_mut(k);
        *probe.params_mut().scalar_mut(k) = orig + h;
        let up = loss(&probe, &views, labels);
        *probe.params_mut().scalar_mut(k) = orig - h;
        let down = loss(&probe, &views, labels);
        *probe.params_mut().scalar_mut(k) = orig;
        let numeric = (up - down) / (2.0 * h);
        let (fwd, bwd) = ((up - base) / h, (base - down) / h);
        if (fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()).max(1e-3) {
            out.kinks += 1;
            continue;
        }
        out.checked += 1;
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5);
        if rel > out.max_rel_err {
            out.max_rel_err = rel;
            out.worst = format!("{} analytic {a:e} numeric {numeric:e}", names[k]);
        }
    }
    out
}

pub fn tiny_check(arch: Arch) -> GradCheck {
    let (t, c, k) = (12, 3, 4);
    let model = build_model(&ModelSpec::tiny(arch, t, c, k), 11).unwrap();
    let xs = random_batch(3, t, c, 5);
    gradient_check(&model, &xs, &[0, 2, 3], 1e-5)
}

pub const EPS: f64 = 1e-4;

/// Window starts by enumeration; overlap is `k / 100` and the stride is
/// `wl · (100 − k) / 100` rounded half up in exact integer arithmetic.
pub fn brute_windows(n: usize, wl: usize, k: usize) -> Vec<usize> {
    let stride = ((wl * (100 - k) * 2 + 100) / 200).max(1);
    (0..n).filter(|s| s % stride == 0 && s + wl <= n).collect()
}

/// Macro F1 from per-class 2TP / (2TP + FP + FN), 0 for an empty class.
pub fn brute_macro_f1(rows: &[Vec<u64>]) -> f64 {
    let n = rows.len();
    let mut total = 0.0;
    for k in 0..n {
        let tp = rows[k][k] as f64;
        let fp: f64 = (0..n).filter(|&t| t != k).map(|t| rows[t][k] as f64).sum();
        let fn_: f64 = (0..n).filter(|&p| p != k).map(|p| rows[k][p] as f64).sum();
        let den = 2.0 * tp + fp + fn_;
        total += if den == 0.0 { 0.0 } else { 2.0 * tp / den };
    }
    total / n as f64
}

fn beats(v: f64, best: f64, lower: bool) -> bool {
    if lower {
        v < best - EPS
    } else {
        v > best + EPS
    }
}

/// Epochs (1-based) at which the monitored series improves on its running best.
pub fn improvement_epochs(series: &[f64], lower: bool) -> Vec<usize> {
    let mut best: Option<f64> = None;
    let mut out = Vec::new();
    for (i, &v) in series.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| beats(v, b, lower)) {
            best = Some(v);
            out.push(i + 1);
        }
    }
    out
}

/// Plateau rate after each epoch end: a reduction fires whenever `patience`
/// epochs have passed since the later of the last improvement and the last
/// reduction.
pub fn plateau_oracle(series: &[f64], lr0: f64, gamma: f64, patience: usize, lower: bool) -> Vec<f64> {
    let improved = improvement_epochs(series, lower);
    let mut anchor = 0usize;
    let mut lr = lr0;
    let mut out = Vec::new();
    for t in 1..=series.len() {
        if improved.contains(&t) {
            anchor = t;
        } else if t - anchor >= patience {
            lr = (lr * gamma).max(1e-8);
            anchor = t;
        }
        out.push(lr);
    }
    out
}

/// First epoch by which `patience` epochs have passed without improvement.
pub fn early_stop_oracle(series: &[f64], patience: usize, lower: bool) -> Option<usize> {
    let improved = improvement_epochs(series, lower);
    (1..=series.len()).find(|&t| {
        let last = improved.iter().copied().filter(|&e| e <= t).max().unwrap_or(0);
        t - last >= patience
    })
}

/// Earliest epoch attaining the extreme finite value.
pub fn selection_oracle(series: &[f64], lower: bool) -> Option<usize> {
    let finite: Vec<f64> = series.iter().copied().filter(|v| v.is_finite()).collect();
    let target = if lower {
        finite.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        finite.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    series.iter().position(|&v| v == target && v.is_finite()).map(|i| i + 1)
}

/// Deterministic adversarial monitored series: plateaus, ties, steps at and
/// around the improvement threshold, oscillation and non-finite spikes.
pub fn adversarial_series(count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let len = rng.random_range(20..=200);
            let mut v = rng.random_range(0.2..2.0);
            let mut s = Vec::with_capacity(len);
            for t in 0..len {
                let step = match (i + t / 7) % 8 {
                    0 => 0.0,
                    1 => -EPS,
                    2 => -EPS * 0.5,
                    3 => -EPS * 1.5,
                    4 => rng.random_range(-0.05..0.05),
                    5 => if t % 2 == 0 { 0.01 } else { -0.01 },
                    6 => -rng.random_range(0.0..0.02),
                    _ => rng.random_range(0.0..0.01),
                };
                v += step;
                let x = match rng.random_range(0..60) {
                    0 => f64::NAN,
                    1 => f64::INFINITY,
                    _ => v,
                };
                s.push(x);
            }
            if i % 5 == 0 {
                s.iter_mut().for_each(|x| {
                    if x.is_finite() {
                        *x = (*x * 100.0).round() / 100.0
                    }
                });
            }
            s
        })
        .collect()
}
