use serde::{Deserialize, Serialize};

use super::param::Param;
use crate::error::{Error, Result};

/// Bias-corrected Adam. Moment buffers are allocated on the first step to
/// match the trainable parameter arrays, in the order they are passed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        AdamState {
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn second_moments(&self) -> impl Iterator<Item = &f64> {
        self.second_moment.iter().flatten()
    }
}

/// One optimizer update over the trainable entries of `params`.
///
/// Gradients are read, not cleared. Fails without touching anything when a
/// gradient is non-finite.
pub fn adam_step(params: &mut [&mut Param], state: &mut AdamState) -> Result<()> {
    let trainable: Vec<usize> = (0..params.len()).filter(|&i| params[i].trainable).collect();
    for &i in &trainable {
        let p = &params[i];
        if p.grad.len() != p.value.len() {
            return Err(Error::shape("parameter without a gradient buffer"));
        }
        if p.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
    }
    if state.first_moment.is_empty() {
        state.first_moment = trainable.iter().map(|&i| vec![0.0; params[i].len()]).collect();
        state.second_moment = state.first_moment.clone();
    }
    if state.first_moment.len() != trainable.len()
        || trainable
            .iter()
            .zip(&state.first_moment)
            .any(|(&i, m)| m.len() != params[i].len())
    {
        return Err(Error::shape("optimizer state does not match parameters"));
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (slot, &i) in trainable.iter().enumerate() {
        let p = &mut *params[i];
        let m = &mut state.first_moment[slot];
        let v = &mut state.second_moment[slot];
        for j in 0..p.value.len() {
            let g = p.grad[j];
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p.value[j] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.eps_hat);
        }
    }
    Ok(())
}
