//! Adam with bias correction, operating on flat parameter slices.

use serde::{Deserialize, Serialize};

use super::NumericError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// Hyperparameters bundled so call sites don't repeat the defaults.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(
        &self,
        params: &mut [f64],
        grads: &[f64],
        state: &mut AdamState,
    ) -> Result<(), NumericError> {
        adam_step(params, grads, state, self.lr, self.beta1, self.beta2, self.eps)
    }
}

pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<(), NumericError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(NumericError::ShapeMismatch {
            op: "adam_step",
            expected: format!("{} grads/state", params.len()),
            got: format!("{}/{}", grads.len(), state.m.len()),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
