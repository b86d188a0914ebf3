//! A trained network of any family, bound to its input-channel selection.

use serde::{Deserialize, Serialize};
use wmse_core::models::{build_named_model, Model, ModelSpec, ResidualComposite};
use wmse_core::numerics::{Mode, Param, Tensor1D};
use wmse_core::spectral::{Ddae, DdaeSpec};
use wmse_core::{Error, Result};

use crate::model_id::ModelId;

#[derive(Debug, Clone)]
pub enum Network {
    Plain(Model),
    Residual(ResidualComposite),
    Ddae(Ddae),
}

/// Architecture description stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSpec {
    Plain {
        spec: ModelSpec,
    },
    Residual {
        primary: ModelSpec,
        refiner: ModelSpec,
        primary_trained: bool,
    },
    Ddae {
        spec: DdaeSpec,
    },
}

/// Architecture knobs shared by every family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Overrides {
    /// Channels per convolution layer.
    pub width: Option<usize>,
    /// Units per DDAE hidden layer.
    pub ddae_hidden: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Enhancer {
    pub id: ModelId,
    /// Corpus channels fed to the network, in order.
    pub channels: Vec<usize>,
    pub network: Network,
}

fn conv_spec(base: &str, n: usize, o: Overrides, seed: u64) -> Result<ModelSpec> {
    let mut s = build_named_model(base, n)?;
    if let Some(w) = o.width {
        s = s.with_width(w);
    }
    Ok(s.with_seed(seed))
}

impl Enhancer {
    /// Freshly initialized network for `id` over the given corpus channels.
    pub fn build(id: &ModelId, channels: Vec<usize>, o: Overrides, seed: u64) -> Result<Self> {
        let n = channels.len();
        let network = if id.is_residual() {
            let primary = Model::new(conv_spec("FCN", n, o, seed)?)?;
            Network::Residual(ResidualComposite::new(
                primary,
                conv_spec("SDFCN", n, o, seed.wrapping_add(1))?,
            )?)
        } else if id.is_ddae() {
            let mut spec = DdaeSpec::new(n);
            if let Some(h) = o.ddae_hidden {
                spec = spec.with_width(h);
            }
            spec.seed = seed;
            Network::Ddae(Ddae::new(spec)?)
        } else {
            Network::Plain(Model::new(conv_spec(&id.base, n, o, seed)?)?)
        };
        Ok(Enhancer {
            id: id.clone(),
            channels,
            network,
        })
    }

    /// Rebuilds the architecture; parameters come out freshly initialized.
    pub fn from_spec(id: ModelId, channels: Vec<usize>, spec: &NetworkSpec) -> Result<Self> {
        let network = match spec {
            NetworkSpec::Plain { spec } => Network::Plain(Model::new(spec.clone())?),
            NetworkSpec::Residual {
                primary,
                refiner,
                primary_trained,
            } => Network::Residual(ResidualComposite::from_parts(
                Model::new(primary.clone())?,
                Model::new(refiner.clone())?,
                *primary_trained,
            )?),
            NetworkSpec::Ddae { spec } => Network::Ddae(Ddae::new(spec.clone())?),
        };
        let e = Enhancer {
            id,
            channels,
            network,
        };
        if e.input_channels() != e.channels.len() {
            return Err(Error::ChannelMismatch {
                expected: e.input_channels(),
                actual: e.channels.len(),
            });
        }
        Ok(e)
    }

    pub fn spec(&self) -> NetworkSpec {
        match &self.network {
            Network::Plain(m) => NetworkSpec::Plain {
                spec: m.spec().clone(),
            },
            Network::Residual(c) => NetworkSpec::Residual {
                primary: c.primary.spec().clone(),
                refiner: c.refiner.spec().clone(),
                primary_trained: c.primary_trained(),
            },
            Network::Ddae(d) => NetworkSpec::Ddae {
                spec: d.spec().clone(),
            },
        }
    }

    pub fn input_channels(&self) -> usize {
        match &self.network {
            Network::Plain(m) => m.input_channels(),
            Network::Residual(c) => c.input_channels(),
            Network::Ddae(d) => d.spec().input_channels,
        }
    }

    /// Every parameter array in declaration order.
    pub fn params(&self) -> Vec<&Param> {
        match &self.network {
            Network::Plain(m) => m.params(),
            Network::Residual(c) => {
                let mut p = c.primary.params();
                p.extend(c.refiner.params());
                p
            }
            Network::Ddae(d) => d.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match &mut self.network {
            Network::Plain(m) => m.params_mut(),
            Network::Residual(c) => {
                let mut p = c.primary.params_mut();
                p.extend(c.refiner.params_mut());
                p
            }
            Network::Ddae(d) => d.params_mut(),
        }
    }

    /// Enhances one recording given the already selected channels.
    pub fn enhance(&mut self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        if inputs.len() != self.input_channels() {
            return Err(Error::ChannelMismatch {
                expected: self.input_channels(),
                actual: inputs.len(),
            });
        }
        let x = || Tensor1D::from_channels(inputs);
        match &mut self.network {
            Network::Plain(m) => Ok(m.forward(&x()?, None, Mode::Inference)?.into_values()),
            Network::Residual(c) => Ok(c.forward(&x()?)?.into_values()),
            Network::Ddae(d) => d.enhance(inputs),
        }
    }

    /// Picks this enhancer's channels out of a full recording.
    pub fn select<'a>(&self, recording: &'a [Vec<f64>]) -> Result<Vec<&'a [f64]>> {
        self.channels
            .iter()
            .map(|&c| {
                recording.get(c).map(Vec::as_slice).ok_or(Error::ChannelMismatch {
                    expected: self.channels.iter().max().map_or(0, |m| m + 1),
                    actual: recording.len(),
                })
            })
            .collect()
    }
}
