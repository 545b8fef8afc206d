use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamaxConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamaxConfig {
    fn default() -> Self {
        Self {
            alpha: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adamax moments for a list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamaxState {
    pub step_count: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub weighted_inf_norm: Vec<Vec<f64>>,
    pub config: AdamaxConfig,
}

impl AdamaxState {
    pub fn new(sizes: &[usize], config: AdamaxConfig) -> Self {
        Self {
            step_count: 0,
            first_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            weighted_inf_norm: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            config,
        }
    }
}

/// One Adamax update:
/// `m ← β1·m + (1−β1)·g`, `u ← max(β2·u, |g|)`,
/// `θ ← θ − α/(1−β1^t) · m/(u+ε)`.
pub fn adamax_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamaxState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameter tensors, {} gradients, {} optimizer slots",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.first_moment[k].len() {
            return Err(Error::ShapeMismatch(format!("parameter tensor {k}")));
        }
    }
    state.step_count += 1;
    let AdamaxConfig {
        alpha,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let lr = alpha / (1.0 - beta1.powi(state.step_count as i32));
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first_moment[k];
        let u = &mut state.weighted_inf_norm[k];
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            u[i] = (beta2 * u[i]).max(g[i].abs());
            p[i] -= lr * m[i] / (u[i] + epsilon);
        }
    }
    Ok(())
}
