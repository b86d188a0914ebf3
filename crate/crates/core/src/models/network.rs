use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::spec::{Block, FrontEnd, ModelSpec};
use crate::error::{Error, Result};
use crate::layers::{
    backward_stack, build_conv_block, build_dilated_block, forward_stack, init_conv, Layer,
    LayerCensus, SincConv, SincKernel,
};
use crate::numerics::{Activation, ConvLayerParams, Differentiable, Mode, Param, Tensor1D};

/// A network instantiated from a [`ModelSpec`].
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    front: Vec<Layer>,
    trunk: Vec<Vec<Layer>>,
    head: Vec<Layer>,
    /// Channel counts of each stage seen in the last training forward.
    stage_channels: Vec<usize>,
}

/// Parameter counts of every layer plus totals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Census {
    pub layers: Vec<LayerCensus>,
    pub trainable: usize,
    pub state: usize,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let n = spec.input_channels;
        let front_first = match &spec.front_end {
            FrontEnd::Sinc {
                length,
                channels,
                paper_sign,
            } => {
                let mut k = SincKernel::mel_init(*channels, n, *length)?;
                k.paper_sign = *paper_sign;
                Layer::Sinc(SincConv::new(k))
            }
            FrontEnd::Conv {
                kernel_size,
                channels,
            } => Layer::conv(init_conv(n, *channels, *kernel_size, 1, &mut rng)?),
        };
        let c0 = spec.front_end.channels();
        let front = vec![
            front_first,
            Layer::batchnorm(c0),
            Layer::act(Activation::leaky()),
        ];
        let mut trunk = Vec::with_capacity(spec.trunk.len());
        for (j, block) in spec.trunk.iter().enumerate() {
            let cin = spec.block_input_channels(j);
            trunk.push(match block {
                Block::Conv {
                    kernel_size,
                    channels,
                } => build_conv_block(cin, *kernel_size, *channels, &mut rng)?,
                Block::Dilated(s) => build_dilated_block(cin, s, &mut rng)?,
                Block::DilatedLayer {
                    kernel_size,
                    dilation,
                    channels,
                } => vec![
                    Layer::conv(init_conv(cin, *channels, *kernel_size, *dilation, &mut rng)?),
                    Layer::batchnorm(*channels),
                    Layer::act(Activation::leaky()),
                ],
            });
        }
        let hin = spec.block_input_channels(spec.trunk.len());
        let head_conv = if spec.head.zero_init {
            ConvLayerParams::zeros(hin, 1, spec.head.kernel_size, 1)?
        } else {
            init_conv(hin, 1, spec.head.kernel_size, 1, &mut rng)?
        };
        let head = vec![Layer::conv(head_conv), Layer::act(Activation::Tanh)];
        Ok(Model {
            stage_channels: spec.stage_channels(),
            spec,
            front,
            trunk,
            head,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn input_channels(&self) -> usize {
        self.spec.input_channels
    }

    /// Maps `input` (plus `aux` channels when the spec has them) to one
    /// output channel of the same length.
    pub fn forward(&mut self, input: &Tensor1D, aux: Option<&Tensor1D>, mode: Mode) -> Result<Tensor1D> {
        if input.channels() != self.spec.input_channels {
            return Err(Error::ChannelMismatch {
                expected: self.spec.input_channels,
                actual: input.channels(),
            });
        }
        let features = forward_stack(&mut self.front, input, mode)?;
        let stage0 = match (self.spec.aux_channels, aux) {
            (0, None) => features,
            (k, Some(a)) if a.channels() == k && a.length() == input.length() => {
                Tensor1D::concat(&[&features, a])?
            }
            (k, _) => {
                return Err(Error::shape(format!(
                    "model expects {k} auxiliary channels of length {}",
                    input.length()
                )))
            }
        };
        let mut stages = vec![stage0];
        for j in 0..self.trunk.len() {
            let x = self.block_input(&stages, j)?;
            let y = forward_stack(&mut self.trunk[j], &x, mode)?;
            stages.push(y);
        }
        let x = self.block_input(&stages, self.trunk.len())?;
        self.stage_channels = stages.iter().map(Tensor1D::channels).collect();
        forward_stack(&mut self.head, &x, mode)
    }

    fn block_input(&self, stages: &[Tensor1D], j: usize) -> Result<Tensor1D> {
        let sources: Vec<usize> = self.skip_sources(j).collect();
        if sources.is_empty() {
            return Ok(stages[j].clone());
        }
        let mut parts = vec![&stages[j]];
        parts.extend(sources.iter().map(|&s| &stages[s]));
        Tensor1D::concat(&parts)
    }

    fn skip_sources(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.spec
            .skips
            .iter()
            .filter(move |&&(_, d)| d == j)
            .map(|&(s, _)| s)
    }

    /// Splits the gradient of a block input back onto the stages it was
    /// concatenated from.
    fn scatter(&self, grads: &mut [Option<Tensor1D>], g: Tensor1D, j: usize) -> Result<()> {
        let mut targets = vec![j];
        targets.extend(self.skip_sources(j));
        let mut offset = 0;
        for s in targets {
            let c = self.stage_channels[s];
            let part = if offset == 0 && c == g.channels() {
                g.clone()
            } else {
                g.slice_channels(offset, c)?
            };
            offset += c;
            match &mut grads[s] {
                Some(acc) => acc.add_assign(&part)?,
                slot => *slot = Some(part),
            }
        }
        Ok(())
    }

    /// Backward pass for the last training-mode forward. Accumulates
    /// parameter gradients and returns the gradient of the main input.
    pub fn backward(&mut self, upstream: &Tensor1D) -> Result<Tensor1D> {
        Ok(self.backward_with_aux(upstream)?.0)
    }

    /// Like [`Model::backward`], also returning the gradient of the
    /// auxiliary channels when the spec has any.
    pub fn backward_with_aux(&mut self, upstream: &Tensor1D) -> Result<(Tensor1D, Option<Tensor1D>)> {
        let t = self.trunk.len();
        let mut grads: Vec<Option<Tensor1D>> = vec![None; t + 1];
        let g = backward_stack(&mut self.head, upstream)?;
        self.scatter(&mut grads, g, t)?;
        for j in (0..t).rev() {
            let gj = grads[j + 1]
                .take()
                .ok_or_else(|| Error::invalid("missing stage gradient"))?;
            let g = backward_stack(&mut self.trunk[j], &gj)?;
            self.scatter(&mut grads, g, j)?;
        }
        let g0 = grads[0]
            .take()
            .ok_or_else(|| Error::invalid("missing stage gradient"))?;
        let fc = self.spec.front_end.channels();
        let (gf, gaux) = if self.spec.aux_channels > 0 {
            (
                g0.slice_channels(0, fc)?,
                Some(g0.slice_channels(fc, self.spec.aux_channels)?),
            )
        } else {
            (g0, None)
        };
        Ok((backward_stack(&mut self.front, &gf)?, gaux))
    }

    fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.front
            .iter()
            .chain(self.trunk.iter().flatten())
            .chain(self.head.iter())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.front
            .iter_mut()
            .chain(self.trunk.iter_mut().flatten())
            .chain(self.head.iter_mut())
    }

    /// Every parameter array (trainable and state) in declaration order.
    pub fn params(&self) -> Vec<&Param> {
        self.layers().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn clear_caches(&mut self) {
        for l in self.layers_mut() {
            l.clear_cache();
        }
    }

    pub fn census(&self) -> Census {
        let layers: Vec<LayerCensus> = self.layers().map(Layer::census).collect();
        Census {
            trainable: layers.iter().map(|l| l.trainable).sum(),
            state: layers.iter().map(|l| l.state).sum(),
            layers,
        }
    }

    /// The first layer (sinc or conv), for filter analysis.
    pub fn first_layer(&self) -> &Layer {
        &self.front[0]
    }

    pub fn first_layer_mut(&mut self) -> &mut Layer {
        &mut self.front[0]
    }

    /// The head convolution.
    pub fn head_conv_mut(&mut self) -> &mut Layer {
        &mut self.head[0]
    }

    /// Layers of trunk block `j`.
    pub fn block(&self, j: usize) -> &[Layer] {
        &self.trunk[j]
    }
}

impl Census {
    /// Trainable parameters of the layers whose index lies in `range`.
    pub fn trainable_in(&self, range: std::ops::Range<usize>) -> usize {
        self.layers[range].iter().map(|l| l.trainable).sum()
    }
}

/// Single-input view of a model for gradient checking; `aux` is held fixed.
pub struct ModelFragment<'a> {
    pub model: &'a mut Model,
    pub aux: Option<Tensor1D>,
}

impl Differentiable for ModelFragment<'_> {
    fn eval(&mut self, input: &Tensor1D) -> Result<Tensor1D> {
        self.model.forward(input, self.aux.as_ref(), Mode::Training)
    }
    fn backprop(&mut self, upstream: &Tensor1D) -> Result<Tensor1D> {
        self.model.backward(upstream)
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.model.params_mut()
    }
}
