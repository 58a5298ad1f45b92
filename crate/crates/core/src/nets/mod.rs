//! Dense generator/discriminator networks, initialization, Adam, and the
//! binary checkpoint format.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState, ADAM_EPSILON};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use mlp::{
    discriminator_forward, generator_forward, init_params, mlp_forward, record_forward,
    record_input_gradient, Activation, Discriminator, DiscriminatorOutput, Generator, LayerLayout,
    MlpSpec, ParamVector,
};

use thiserror::Error;

use crate::autodiff::AutodiffError;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("input has shape {got:?}, expected {expected_cols} columns")]
    InputShape { expected_cols: usize, got: Vec<usize> },
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("non-finite gradient component {value} at index {index}")]
    NonFiniteGradient { index: usize, value: f64 },
    #[error("invalid adam hyperparameters {0:?}")]
    InvalidAdam(AdamConfig),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
