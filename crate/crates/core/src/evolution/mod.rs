//! Mutation, pair scoring, distillation crossover, greedy selection, and
//! the generation loop that ties them to one shared discriminator.

mod config;
mod engine;
mod individual;
mod operators;

pub use config::{CrossoverBasis, EvolutionConfig, TieRule};
pub use engine::{initial_networks, Engine, GenerationRecord, PhaseTiming, StepOutcome};
pub use individual::{Individual, Lineage, Operator};
pub use operators::{
    crossover, distill, distillation_value, evaluate, mutate, mutation_objective, score_pairs, select, Arena,
    CrossoverOutcome, CrossoverSettings, PairScore,
};
