//! Multichannel speech enhancement by waveform mapping.
//!
//! Fully convolutional networks map N noisy input channels straight to one
//! enhanced waveform. The model family covers plain FCNs, a parametric
//! band-pass (sinc) front end, dilated convolution blocks, their
//! combination (SDFCN), and a residual refiner on top of a pre-trained FCN
//! (rSDFCN). A dense spectral-mapping autoencoder (DDAE) serves as the
//! baseline, and a synthetic corpus generator stands in for recorded
//! multichannel data.

pub mod data;
pub mod eval;
pub mod error;
pub mod layers;
pub mod models;
pub mod numerics;
pub mod spectral;
pub mod training;

pub use error::{Error, Result};

/// Sample rate of every waveform in the pipeline, in Hz.
pub const SAMPLE_RATE: u32 = 16_000;
