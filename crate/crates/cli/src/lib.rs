//! Configuration, checkpoints and experiment pipelines behind the `wmse`
//! command.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod enhancer;
pub mod experiment;
pub mod model_id;

pub use enhancer::{Enhancer, Network, NetworkSpec, Overrides};
pub use model_id::ModelId;
