//! Evolutionary GAN training where a population of generators is varied by
//! loss-function mutations and a discriminator-filtered distillation
//! crossover, ranked by discriminator-derived fitness, and greedily selected.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: reverse-mode differentiation over dense tensors
//! - [`nets`]: dense networks, Adam, checkpoints
//! - [`objectives`]: discriminator, mutation, penalty and distillation losses
//! - [`fitness`]: quality/diversity and raw-logit fitness
//! - [`evolution`]: mutation, pair scoring, crossover, selection, the step loop
//! - [`data`]: synthetic mixtures and noise
//! - [`metrics`]: mode coverage and operator-selection accounting
//! - [`harness`]: configuration, logs, training runs, evaluation, comparison

pub mod autodiff;
pub mod data;
pub mod evolution;
pub mod fitness;
pub mod harness;
pub mod metrics;
pub mod nets;
pub mod objectives;

mod error;

pub use error::{Error, Result};
