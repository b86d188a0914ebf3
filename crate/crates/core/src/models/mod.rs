//! The model family, built from declarative specs.

mod network;
mod residual;
mod spec;

pub use network::{Census, Model, ModelFragment};
pub use residual::{combine, ResidualComposite};
pub use spec::{
    build_named_model, Block, FrontEnd, Head, ModelSpec, DEFAULT_WIDTH, MODEL_NAMES,
};
