use serde::{Deserialize, Serialize};

use super::tensor::Tensor1D;
use crate::error::{Error, Result};

/// Negative-side slope used by every LeakyReLU in the model family.
pub const LEAKY_SLOPE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { alpha: f64 },
    Tanh,
}

impl Activation {
    pub fn leaky() -> Self {
        Activation::LeakyRelu { alpha: LEAKY_SLOPE }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu { alpha } => {
                if x >= 0.0 {
                    x
                } else {
                    alpha * x
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the pre-activation `x` and the output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::LeakyRelu { alpha } => {
                if x >= 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn forward(self, input: &Tensor1D) -> Tensor1D {
        input.map(|x| self.apply(x))
    }

    pub fn backward(self, input: &Tensor1D, output: &Tensor1D, upstream: &Tensor1D) -> Result<Tensor1D> {
        if !input.same_shape(upstream) || !input.same_shape(output) {
            return Err(Error::shape("activation gradient shape"));
        }
        let values = input
            .values()
            .iter()
            .zip(output.values())
            .zip(upstream.values())
            .map(|((&x, &y), &g)| g * self.derivative(x, y))
            .collect();
        Tensor1D::from_vec(input.channels(), input.length(), values)
    }
}
