//! Minimal differentiable 1-D tensor engine.

pub mod activation;
pub mod adam;
pub mod batchnorm;
pub mod conv;
mod fftconv;
pub mod gradcheck;
pub mod loss;
pub mod param;
pub mod tensor;

pub use activation::{Activation, LEAKY_SLOPE};
pub use adam::{adam_step, AdamState};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormParams, Mode};
pub use conv::{conv1d_backward, conv1d_forward, ConvLayerParams, Padding};
pub use gradcheck::{grad_check, Differentiable, GradCheckConfig, GradCheckReport};
pub use loss::{mse_grad, mse_loss};
pub use param::Param;
pub use tensor::Tensor1D;
