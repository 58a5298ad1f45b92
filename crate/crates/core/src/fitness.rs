//! Candidate fitness: quality + diversity, or the mean raw logit.

use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Tape, Tensor};
use crate::nets::{Discriminator, Generator, ParamVector};
use crate::objectives::d_loss;
use crate::Result;

/// Floor added to the discriminator gradient norm before the log.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessKind {
    /// `mean D(G(z)) + gamma * (-log ||grad_omega L_D||)`
    Egan,
    /// `mean C(G(z))`
    Cgan,
}

impl FitnessKind {
    pub fn tag(self) -> &'static str {
        match self {
            FitnessKind::Egan => "egan",
            FitnessKind::Cgan => "cgan",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitnessReport {
    pub quality: f64,
    pub diversity: Option<f64>,
    pub combined: f64,
    pub kind: FitnessKind,
}

/// `mean sigmoid(c)`
pub fn quality_from_logits(logits: &[f64]) -> f64 {
    logits.iter().map(|&c| sigmoid(c)).sum::<f64>() / logits.len() as f64
}

/// `mean c`
pub fn cgan_from_logits(logits: &[f64]) -> f64 {
    logits.iter().sum::<f64>() / logits.len() as f64
}

pub fn fitness_egan(quality: f64, diversity: f64, gamma: f64) -> f64 {
    debug_assert!(gamma > 0.0);
    quality + gamma * diversity
}

/// `E_z[D(G(z))]`
pub fn fitness_quality(
    gen: &Generator,
    theta: &ParamVector,
    disc: &Discriminator,
    omega: &ParamVector,
    noise: &Tensor,
) -> Result<f64> {
    let samples = gen.forward(theta, noise)?;
    Ok(quality_from_logits(&disc.logits(omega, &samples)?))
}

/// `E_z[C(G(z))]`
pub fn fitness_cgan(
    gen: &Generator,
    theta: &ParamVector,
    disc: &Discriminator,
    omega: &ParamVector,
    noise: &Tensor,
) -> Result<f64> {
    let samples = gen.forward(theta, noise)?;
    Ok(cgan_from_logits(&disc.logits(omega, &samples)?))
}

/// L2 norm, over every discriminator parameter, of the gradient of
/// `-E_x log D(x) - E_z log(1 - D(fake))`.
pub fn discriminator_grad_norm(
    disc: &Discriminator,
    omega: &ParamVector,
    real: &Tensor,
    fake: &Tensor,
) -> Result<f64> {
    let mut tape = Tape::new();
    let w = tape.leaf("omega", omega.to_tensor());
    let loss = d_loss(&mut tape, disc, w, real, std::slice::from_ref(fake))?;
    let grads = tape.backward(loss)?;
    Ok(grads.wrt(w).data().iter().map(|g| g * g).sum::<f64>().sqrt())
}

/// `-log(||g|| + NORM_FLOOR)` on already generated samples.
pub fn diversity_from_samples(
    disc: &Discriminator,
    omega: &ParamVector,
    real: &Tensor,
    fake: &Tensor,
) -> Result<f64> {
    Ok(-(discriminator_grad_norm(disc, omega, real, fake)? + NORM_FLOOR).ln())
}

pub fn fitness_diversity(
    gen: &Generator,
    theta: &ParamVector,
    disc: &Discriminator,
    omega: &ParamVector,
    real: &Tensor,
    noise: &Tensor,
) -> Result<f64> {
    let fake = gen.forward(theta, noise)?;
    diversity_from_samples(disc, omega, real, &fake)
}

/// Fitness of a candidate whose samples and logits on the shared evaluation
/// batch are already known. `real` is needed only for [`FitnessKind::Egan`].
pub fn report_from_samples(
    kind: FitnessKind,
    disc: &Discriminator,
    omega: &ParamVector,
    samples: &Tensor,
    logits: &[f64],
    real: Option<&Tensor>,
    gamma: f64,
) -> Result<FitnessReport> {
    Ok(match kind {
        FitnessKind::Cgan => {
            let q = cgan_from_logits(logits);
            FitnessReport { quality: q, diversity: None, combined: q, kind }
        }
        FitnessKind::Egan => {
            let real = real.ok_or_else(|| crate::Error::Config("egan fitness needs a real batch".into()))?;
            let q = quality_from_logits(logits);
            let d = diversity_from_samples(disc, omega, real, samples)?;
            FitnessReport { quality: q, diversity: Some(d), combined: fitness_egan(q, d, gamma), kind }
        }
    })
}
