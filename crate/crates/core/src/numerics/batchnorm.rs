use serde::{Deserialize, Serialize};

use super::param::Param;
use super::tensor::Tensor1D;
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Training,
    Inference,
}

/// Per-channel normalization over the time axis of one segment.
///
/// Running statistics follow `r <- momentum * r + (1 - momentum) * batch`,
/// using the biased (population) variance throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams {
    pub channels: usize,
    pub scale: Param,
    pub shift: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub epsilon: f64,
    pub momentum: f64,
}

impl BatchNormParams {
    pub fn new(channels: usize) -> Self {
        BatchNormParams {
            channels,
            scale: Param::new(vec![1.0; channels]),
            shift: Param::zeros(channels),
            running_mean: Param::state(vec![0.0; channels]),
            running_var: Param::state(vec![1.0; channels]),
            epsilon: DEFAULT_EPSILON,
            momentum: DEFAULT_MOMENTUM,
        }
    }

    pub fn parameter_count(&self) -> usize {
        2 * self.channels
    }
}

/// What the backward pass needs from the forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    normalized: Tensor1D,
    inv_std: Vec<f64>,
    mode: Mode,
}

pub fn batchnorm_forward(
    input: &Tensor1D,
    params: &mut BatchNormParams,
    mode: Mode,
) -> Result<(Tensor1D, BatchNormCache)> {
    if input.channels() != params.channels {
        return Err(Error::shape(format!(
            "batch norm over {} channels given {}",
            params.channels,
            input.channels()
        )));
    }
    let n = input.length();
    if mode == Mode::Training && n < 2 {
        return Err(Error::shape("batch norm in training mode needs at least 2 samples"));
    }
    let mut normalized = Tensor1D::zeros(params.channels, n);
    let mut out = Tensor1D::zeros(params.channels, n);
    let mut inv_std = vec![0.0; params.channels];
    for c in 0..params.channels {
        let x = input.channel(c);
        let (mean, var) = match mode {
            Mode::Training => {
                let mean = x.iter().sum::<f64>() / n as f64;
                let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                let m = params.momentum;
                params.running_mean.value[c] = m * params.running_mean.value[c] + (1.0 - m) * mean;
                params.running_var.value[c] = m * params.running_var.value[c] + (1.0 - m) * var;
                (mean, var)
            }
            Mode::Inference => (params.running_mean.value[c], params.running_var.value[c].max(0.0)),
        };
        let is = 1.0 / (var + params.epsilon).sqrt();
        inv_std[c] = is;
        let (s, b) = (params.scale.value[c], params.shift.value[c]);
        let xn = normalized.channel_mut(c);
        for (z, v) in xn.iter_mut().zip(x) {
            *z = (v - mean) * is;
        }
        for (y, z) in out.channel_mut(c).iter_mut().zip(normalized.channel(c)) {
            *y = s * z + b;
        }
    }
    Ok((
        out,
        BatchNormCache {
            normalized,
            inv_std,
            mode,
        },
    ))
}

pub fn batchnorm_backward(
    cache: &BatchNormCache,
    params: &mut BatchNormParams,
    upstream: &Tensor1D,
) -> Result<Tensor1D> {
    if !upstream.same_shape(&cache.normalized) {
        return Err(Error::shape("batch norm upstream gradient shape"));
    }
    let n = upstream.length() as f64;
    let mut dx = Tensor1D::zeros(params.channels, upstream.length());
    for c in 0..params.channels {
        let g = upstream.channel(c);
        let xn = cache.normalized.channel(c);
        let sum_g: f64 = g.iter().sum();
        let sum_gx: f64 = g.iter().zip(xn).map(|(a, b)| a * b).sum();
        params.scale.grad_mut()[c] += sum_gx;
        params.shift.grad_mut()[c] += sum_g;
        let s = params.scale.value[c];
        let is = cache.inv_std[c];
        let dst = dx.channel_mut(c);
        match cache.mode {
            Mode::Training => {
                let k = s * is / n;
                for ((d, gi), xi) in dst.iter_mut().zip(g).zip(xn) {
                    *d = k * (n * gi - sum_g - xi * sum_gx);
                }
            }
            Mode::Inference => {
                for (d, gi) in dst.iter_mut().zip(g) {
                    *d = s * is * gi;
                }
            }
        }
    }
    Ok(dx)
}
