//! Network layers and the paper-specific block constructors.

pub mod blocks;
pub mod sinc;

pub use blocks::{
    build_conv_block, build_dilated_block, init_conv, receptive_field, DilatedBlockSpec,
};
pub use sinc::{sinc_cutoff_reparam, SincConv, SincKernel};

use crate::error::{Error, Result};
use crate::numerics::{
    batchnorm_backward, batchnorm_forward, conv1d_backward, conv1d_forward, Activation,
    BatchNormCache, BatchNormParams, ConvLayerParams, Mode, Padding, Param, Tensor1D,
};

/// One stage of a feed-forward stack. Each variant caches what its
/// backward pass needs during a training-mode forward.
#[derive(Debug, Clone)]
pub enum Layer {
    Conv {
        params: ConvLayerParams,
        padding: Padding,
        input: Option<Tensor1D>,
    },
    Sinc(SincConv),
    BatchNorm {
        params: BatchNormParams,
        cache: Option<BatchNormCache>,
    },
    Act {
        kind: Activation,
        output: Option<Tensor1D>,
    },
}

/// Parameter counts of one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCensus {
    pub name: String,
    pub trainable: usize,
    pub state: usize,
}

impl Layer {
    pub fn conv(params: ConvLayerParams) -> Self {
        Layer::Conv {
            params,
            padding: Padding::Same,
            input: None,
        }
    }

    pub fn batchnorm(channels: usize) -> Self {
        Layer::BatchNorm {
            params: BatchNormParams::new(channels),
            cache: None,
        }
    }

    pub fn act(kind: Activation) -> Self {
        Layer::Act { kind, output: None }
    }

    pub fn forward(&mut self, x: &Tensor1D, mode: Mode) -> Result<Tensor1D> {
        let training = mode == Mode::Training;
        match self {
            Layer::Conv {
                params,
                padding,
                input,
            } => {
                if x.channels() != params.in_channels {
                    return Err(Error::ChannelMismatch {
                        expected: params.in_channels,
                        actual: x.channels(),
                    });
                }
                let y = conv1d_forward(x, params, *padding)?;
                *input = training.then(|| x.clone());
                Ok(y)
            }
            Layer::Sinc(s) => s.forward(x),
            Layer::BatchNorm { params, cache } => {
                let (y, c) = batchnorm_forward(x, params, mode)?;
                *cache = training.then_some(c);
                Ok(y)
            }
            Layer::Act { kind, output } => {
                let y = kind.forward(x);
                *output = training.then(|| y.clone());
                Ok(y)
            }
        }
    }

    pub fn backward(&mut self, g: &Tensor1D) -> Result<Tensor1D> {
        let missing = || Error::invalid("backward without a training-mode forward");
        match self {
            Layer::Conv {
                params,
                padding,
                input,
            } => {
                let x = input.as_ref().ok_or_else(missing)?;
                conv1d_backward(x, params, g, *padding)
            }
            Layer::Sinc(s) => s.backward(g),
            Layer::BatchNorm { params, cache } => {
                let c = cache.as_ref().ok_or_else(missing)?;
                batchnorm_backward(c, params, g)
            }
            Layer::Act { kind, output } => {
                let y = output.as_ref().ok_or_else(missing)?;
                // LeakyReLU keeps the sign, so the output alone decides the slope.
                kind.backward(y, y, g)
            }
        }
    }

    /// Drops cached activations.
    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv { input, .. } => *input = None,
            Layer::Sinc(s) => s.clear_cache(),
            Layer::BatchNorm { cache, .. } => *cache = None,
            Layer::Act { output, .. } => *output = None,
        }
    }

    /// Every parameter array, trainable or not, in a fixed order.
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Conv { params, .. } => vec![&mut params.kernels, &mut params.bias],
            Layer::Sinc(s) => vec![&mut s.kernel.raw_low, &mut s.kernel.raw_bandwidth],
            Layer::BatchNorm { params, .. } => vec![
                &mut params.scale,
                &mut params.shift,
                &mut params.running_mean,
                &mut params.running_var,
            ],
            Layer::Act { .. } => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Conv { params, .. } => vec![&params.kernels, &params.bias],
            Layer::Sinc(s) => vec![&s.kernel.raw_low, &s.kernel.raw_bandwidth],
            Layer::BatchNorm { params, .. } => vec![
                &params.scale,
                &params.shift,
                &params.running_mean,
                &params.running_var,
            ],
            Layer::Act { .. } => Vec::new(),
        }
    }

    pub fn out_channels(&self, in_channels: usize) -> usize {
        match self {
            Layer::Conv { params, .. } => params.out_channels,
            Layer::Sinc(s) => s.kernel.out_channels,
            Layer::BatchNorm { params, .. } => params.channels,
            Layer::Act { .. } => in_channels,
        }
    }

    pub fn census(&self) -> LayerCensus {
        let (name, trainable, state) = match self {
            Layer::Conv { params, .. } => (
                format!(
                    "conv(k={}, d={}, {}->{})",
                    params.kernel_size, params.dilation, params.in_channels, params.out_channels
                ),
                params.parameter_count(),
                0,
            ),
            Layer::Sinc(s) => (
                format!(
                    "sinc(L={}, {}->{})",
                    s.kernel.length, s.kernel.in_channels, s.kernel.out_channels
                ),
                s.kernel.parameter_count(),
                0,
            ),
            Layer::BatchNorm { params, .. } => (
                format!("batchnorm({})", params.channels),
                params.parameter_count(),
                2 * params.channels,
            ),
            Layer::Act { kind, .. } => (
                match kind {
                    Activation::LeakyRelu { alpha } => format!("leaky_relu({alpha})"),
                    Activation::Tanh => "tanh".to_string(),
                },
                0,
                0,
            ),
        };
        LayerCensus {
            name,
            trainable,
            state,
        }
    }
}

/// Runs a layer stack forward.
pub fn forward_stack(layers: &mut [Layer], x: &Tensor1D, mode: Mode) -> Result<Tensor1D> {
    let mut h = x.clone();
    for layer in layers.iter_mut() {
        h = layer.forward(&h, mode)?;
    }
    Ok(h)
}

/// Runs a layer stack backward, returning the input gradient.
pub fn backward_stack(layers: &mut [Layer], g: &Tensor1D) -> Result<Tensor1D> {
    let mut g = g.clone();
    for layer in layers.iter_mut().rev() {
        g = layer.backward(&g)?;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, Differentiable, GradCheckConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) struct Stack(pub Vec<Layer>);

    impl Differentiable for Stack {
        fn eval(&mut self, input: &Tensor1D) -> Result<Tensor1D> {
            forward_stack(&mut self.0, input, Mode::Training)
        }
        fn backprop(&mut self, upstream: &Tensor1D) -> Result<Tensor1D> {
            backward_stack(&mut self.0, upstream)
        }
        fn params_mut(&mut self) -> Vec<&mut Param> {
            self.0.iter_mut().flat_map(|l| l.params_mut()).collect()
        }
    }

    fn probe(channels: usize, len: usize, seed: u64) -> Tensor1D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..channels * len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor1D::from_vec(channels, len, v).unwrap()
    }

    #[test]
    fn conv_block_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layers = build_conv_block(2, 5, 3, &mut rng).unwrap();
        let mut s = Stack(layers);
        let r = grad_check(&mut s, &probe(2, 40, 2), &GradCheckConfig::default()).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn tanh_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layers = vec![Layer::conv(init_conv(2, 1, 3, 1, &mut rng).unwrap())];
        layers.push(Layer::act(Activation::Tanh));
        let r = grad_check(&mut Stack(layers), &probe(2, 30, 5), &GradCheckConfig::default())
            .unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn sinc_layer_gradients() {
        let k = SincKernel::mel_init(4, 2, 31).unwrap();
        let layers = vec![Layer::Sinc(SincConv::new(k))];
        let cfg = GradCheckConfig {
            tolerance: 1e-3,
            ..Default::default()
        };
        let r = grad_check(&mut Stack(layers), &probe(2, 64, 9), &cfg).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn inference_forward_leaves_no_cache() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layers = build_conv_block(1, 3, 2, &mut rng).unwrap();
        forward_stack(&mut layers, &probe(1, 10, 0), Mode::Inference).unwrap();
        assert!(backward_stack(&mut layers, &Tensor1D::zeros(2, 10)).is_err());
    }

    #[test]
    fn census_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = build_conv_block(2, 55, 30, &mut rng).unwrap();
        assert_eq!(l[0].census().trainable, 55 * 2 * 30 + 30);
        assert_eq!(l[1].census().trainable, 60);
        assert_eq!(l[2].census().trainable, 0);
        let s = Layer::Sinc(SincConv::new(SincKernel::mel_init(30, 2, 251).unwrap()));
        assert_eq!(s.census().trainable, 120);
    }
}
