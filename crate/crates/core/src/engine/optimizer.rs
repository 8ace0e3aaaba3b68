//! First-order update rules. Weight decay is an additive L2 term on the
//! gradient (`g + wd · θ`) for every rule.
//!
//! * SGD: `θ ← θ − lr · g`
//! * Adam: β₁ = 0.9, β₂ = 0.999, ε = 1e-8, bias-corrected moments
//! * Adadelta: ρ = 0.9, ε = 1e-6, step scaled by `lr`
//! * RMSprop: α = 0.99, ε = 1e-8
//! * Adagrad: ε = 1e-10

use crate::error::{Error, Result};
use crate::models::ParamSet;
use crate::protocol::Optimizer;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const ADADELTA_RHO: f64 = 0.9;
pub const ADADELTA_EPS: f64 = 1e-6;
pub const RMSPROP_ALPHA: f64 = 0.99;
pub const RMSPROP_EPS: f64 = 1e-8;
pub const ADAGRAD_EPS: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: Optimizer,
    pub step: u64,
    /// Per-parameter accumulators: Adam (m, v), Adadelta (E[g²], E[Δ²]),
    /// RMSprop (E[g²]), Adagrad (Σg²), SGD none.
    slots: Vec<ParamSet>,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, params: &ParamSet) -> Self {
        let n_slots = match kind {
            Optimizer::Sgd => 0,
            Optimizer::Rmsprop | Optimizer::Adagrad => 1,
            Optimizer::Adam | Optimizer::Adadelta => 2,
        };
        Self {
            kind,
            step: 0,
            slots: (0..n_slots).map(|_| params.zeros_like()).collect(),
        }
    }
}

/// Applies one update in place.
pub fn optimizer_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    lr: f64,
    weight_decay: f64,
    state: &mut OptimizerState,
) -> Result<()> {
    if params.layout() != grads.layout() {
        return Err(Error::Shape("gradient layout does not match parameters".into()));
    }
    state.step += 1;
    let step = state.step as f64;
    let kind = state.kind;
    let (bc1, bc2) = (1.0 - ADAM_BETA1.powf(step), 1.0 - ADAM_BETA2.powf(step));

    let n_tensors = params.tensors().len();
    for ti in 0..n_tensors {
        let g_t = &grads.tensors()[ti].data;
        let p_t = &mut params.tensors_mut()[ti].data;
        match kind {
            Optimizer::Sgd => {
                for (p, &g) in p_t.iter_mut().zip(g_t) {
                    *p -= lr * (g + weight_decay * *p);
                }
            }
            Optimizer::Adam => {
                let (first, second) = state.slots.split_at_mut(1);
                let m = &mut first[0].tensors_mut()[ti].data;
                let v = &mut second[0].tensors_mut()[ti].data;
                for i in 0..p_t.len() {
                    let g = g_t[i] + weight_decay * p_t[i];
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    p_t[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
            Optimizer::Adadelta => {
                let (first, second) = state.slots.split_at_mut(1);
                let sq = &mut first[0].tensors_mut()[ti].data;
                let acc = &mut second[0].tensors_mut()[ti].data;
                for i in 0..p_t.len() {
                    let g = g_t[i] + weight_decay * p_t[i];
                    sq[i] = ADADELTA_RHO * sq[i] + (1.0 - ADADELTA_RHO) * g * g;
                    let delta = (acc[i] + ADADELTA_EPS).sqrt() / (sq[i] + ADADELTA_EPS).sqrt() * g;
                    acc[i] = ADADELTA_RHO * acc[i] + (1.0 - ADADELTA_RHO) * delta * delta;
                    p_t[i] -= lr * delta;
                }
            }
            Optimizer::Rmsprop => {
                let sq = &mut state.slots[0].tensors_mut()[ti].data;
                for i in 0..p_t.len() {
                    let g = g_t[i] + weight_decay * p_t[i];
                    sq[i] = RMSPROP_ALPHA * sq[i] + (1.0 - RMSPROP_ALPHA) * g * g;
                    p_t[i] -= lr * g / (sq[i].sqrt() + RMSPROP_EPS);
                }
            }
            Optimizer::Adagrad => {
                let sum = &mut state.slots[0].tensors_mut()[ti].data;
                for i in 0..p_t.len() {
                    let g = g_t[i] + weight_decay * p_t[i];
                    sum[i] += g * g;
                    p_t[i] -= lr * g / (sum[i].sqrt() + ADAGRAD_EPS);
                }
            }
        }
        if p_t.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteUpdate(params.tensors()[ti].name.clone()));
        }
    }
    Ok(())
}
