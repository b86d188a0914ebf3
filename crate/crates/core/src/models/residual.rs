use super::network::Model;
use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::numerics::{Mode, Tensor1D};

/// A frozen primary enhancer plus a refiner that predicts its residual.
///
/// The refiner sees the noisy channels through its own front end and the
/// primary output as one extra stage-0 channel. The composite output is
/// `clamp(refiner + primary, -1, 1)`.
#[derive(Debug, Clone)]
pub struct ResidualComposite {
    pub primary: Model,
    pub refiner: Model,
    primary_trained: bool,
}

impl ResidualComposite {
    /// Builds the composite; the refiner spec gets one auxiliary channel
    /// and a zero-initialized head.
    pub fn new(primary: Model, mut refiner_spec: ModelSpec) -> Result<Self> {
        if refiner_spec.input_channels != primary.input_channels() {
            return Err(Error::ChannelMismatch {
                expected: primary.input_channels(),
                actual: refiner_spec.input_channels,
            });
        }
        refiner_spec.aux_channels = 1;
        refiner_spec.head.zero_init = true;
        refiner_spec.name = format!("r{}", refiner_spec.name);
        Ok(ResidualComposite {
            primary,
            refiner: Model::new(refiner_spec)?,
            primary_trained: false,
        })
    }

    /// Reassembles a composite from two already-built models.
    pub fn from_parts(primary: Model, refiner: Model, primary_trained: bool) -> Result<Self> {
        if refiner.spec().aux_channels != 1 || refiner.input_channels() != primary.input_channels() {
            return Err(Error::invalid("refiner must take the primary's inputs plus one aux channel"));
        }
        Ok(ResidualComposite {
            primary,
            refiner,
            primary_trained,
        })
    }

    pub fn mark_primary_trained(&mut self) {
        self.primary_trained = true;
    }

    pub fn primary_trained(&self) -> bool {
        self.primary_trained
    }

    pub fn input_channels(&self) -> usize {
        self.primary.input_channels()
    }

    /// Primary output in inference mode.
    pub fn primary_output(&mut self, input: &Tensor1D) -> Result<Tensor1D> {
        if !self.primary_trained {
            return Err(Error::PrimaryNotTrained);
        }
        self.primary.forward(input, None, Mode::Inference)
    }

    pub fn forward(&mut self, input: &Tensor1D) -> Result<Tensor1D> {
        let p = self.primary_output(input)?;
        let r = self.refiner.forward(input, Some(&p), Mode::Inference)?;
        Ok(combine(&r, &p))
    }
}

/// `clamp(residual + primary, -1, 1)`.
pub fn combine(residual: &Tensor1D, primary: &Tensor1D) -> Tensor1D {
    let v = residual
        .values()
        .iter()
        .zip(primary.values())
        .map(|(r, p)| (r + p).clamp(-1.0, 1.0))
        .collect();
    Tensor1D::from_vec(primary.channels(), primary.length(), v)
        .expect("combine keeps the primary's shape")
}
