//! Adam with decoupled weight decay.

use crate::error::{MfgError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self { m: vec![0.0; num_params], v: vec![0.0; num_params], step: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One update: `p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)`.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, lr: f64, weight_decay: f64) -> Result<()> {
    let n = params.len();
    if grad.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(MfgError::ShapeMismatch(format!(
            "adam: {} parameters, {} gradient entries, {} moments",
            n,
            grad.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for i in 0..n {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * (m_hat / (v_hat.sqrt() + state.eps) + weight_decay * params[i]);
    }
    Ok(())
}
