use serde::{Deserialize, Serialize};

/// A parameter array with its accumulated gradient.
///
/// Non-trainable state (batch-norm running statistics, feature
/// normalization) is stored the same way so that checkpoints and hashes
/// see every number a model depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
    pub trainable: bool,
}

impl Param {
    pub fn new(value: Vec<f64>) -> Self {
        let grad = vec![0.0; value.len()];
        Param {
            value,
            grad,
            trainable: true,
        }
    }

    pub fn state(value: Vec<f64>) -> Self {
        Param {
            trainable: false,
            ..Param::new(value)
        }
    }

    pub fn zeros(n: usize) -> Self {
        Param::new(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Gradient buffer, allocated on first use (deserialized params carry none).
    pub fn grad_mut(&mut self) -> &mut [f64] {
        if self.grad.len() != self.value.len() {
            self.grad = vec![0.0; self.value.len()];
        }
        &mut self.grad
    }

    pub fn zero_grad(&mut self) {
        if self.grad.len() != self.value.len() {
            self.grad = vec![0.0; self.value.len()];
        } else {
            self.grad.fill(0.0);
        }
    }
}
