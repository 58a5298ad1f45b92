use serde::{Deserialize, Serialize};

use crate::fitness::FitnessKind;
use crate::nets::AdamConfig;
use crate::objectives::{DistillNorm, MutationKind};
use crate::{Error, Result};

/// Which parent a crossover child starts from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossoverBasis {
    Better,
    Worse,
}

/// How rows with equal parent logits are handled during distillation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Imitate the parent the child was initialized from.
    Basis,
    /// Drop tied rows from the loss.
    Skip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    /// Parents kept per generation.
    pub mu: usize,
    /// Mutation operators applied to every parent; `n_m` is its length.
    pub mutations: Vec<MutationKind>,
    /// Crossover children per generation.
    pub n_c: usize,
    /// Discriminator updates per generation.
    pub n_d: usize,
    /// Mutation / discriminator batch size.
    pub m: usize,
    /// Evaluation and crossover batch size.
    pub n: usize,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma: f64,
    /// Gradient-penalty weight; 0 disables the term.
    pub gp_lambda: f64,
    pub fitness: FitnessKind,
    /// Distillation steps per crossover.
    pub k_cross: usize,
    pub crossover_basis: CrossoverBasis,
    pub tie_rule: TieRule,
    pub distill_norm: DistillNorm,
    pub seed: u64,
    pub iterations: u64,
    /// Build offspring on the rayon pool. Results are merged in lineage order.
    pub parallel: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            mu: 1,
            mutations: MutationKind::ALL.to_vec(),
            n_c: 1,
            n_d: 3,
            m: 32,
            n: 256,
            alpha: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            gamma: 0.05,
            gp_lambda: 0.0,
            fitness: FitnessKind::Cgan,
            k_cross: 1,
            crossover_basis: CrossoverBasis::Better,
            tie_rule: TieRule::Basis,
            distill_norm: DistillNorm::Mean,
            seed: 0,
            iterations: 20_000,
            parallel: false,
        }
    }
}

impl EvolutionConfig {
    pub fn n_m(&self) -> usize {
        self.mutations.len()
    }

    /// Number of mutation offspring per generation.
    pub fn mutant_count(&self) -> usize {
        self.mu * self.n_m()
    }

    pub fn pool_size(&self) -> usize {
        self.mutant_count() + self.n_c
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.alpha, beta1: self.beta1, beta2: self.beta2 }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.mu == 0 || self.m == 0 || self.n == 0 || self.n_d == 0 {
            return fail("mu, m, n and n_d must be positive".into());
        }
        if self.m % self.mu != 0 {
            return fail(format!("mu = {} must divide m = {}", self.mu, self.m));
        }
        if self.mutations.is_empty() {
            return fail("at least one mutation operator is required".into());
        }
        let mut kinds = self.mutations.clone();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != self.mutations.len() {
            return fail(format!("duplicate mutation operators in {:?}", self.mutations));
        }
        let p = self.mutant_count();
        if self.n_c > p * (p - 1) / 2 {
            return fail(format!("n_c = {} exceeds the {} available offspring pairs", self.n_c, p * (p - 1) / 2));
        }
        if self.n_c > 0 && self.k_cross == 0 {
            return fail("k_cross must be positive when crossover is enabled".into());
        }
        if !(self.gamma > 0.0) {
            return fail(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.gp_lambda >= 0.0) {
            return fail(format!("gp_lambda must be non-negative, got {}", self.gp_lambda));
        }
        if !(self.alpha > 0.0) {
            return fail(format!("alpha must be positive, got {}", self.alpha));
        }
        self.adam().validate()?;
        Ok(())
    }
}
