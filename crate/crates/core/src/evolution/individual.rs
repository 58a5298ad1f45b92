use std::fmt;

use crate::autodiff::Tensor;
use crate::nets::{AdamState, ParamVector};
use crate::objectives::MutationKind;

/// Variation operator that produced an individual.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operator {
    Initial,
    Mutation(MutationKind),
    Crossover,
}

impl Operator {
    pub const REPORTED: [Operator; 4] = [
        Operator::Mutation(MutationKind::Minimax),
        Operator::Mutation(MutationKind::Heuristic),
        Operator::Mutation(MutationKind::LeastSquares),
        Operator::Crossover,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Operator::Initial => "initial",
            Operator::Mutation(k) => k.tag(),
            Operator::Crossover => "crossover",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "initial" => Operator::Initial,
            "minimax" => Operator::Mutation(MutationKind::Minimax),
            "heuristic" => Operator::Mutation(MutationKind::Heuristic),
            "least_squares" => Operator::Mutation(MutationKind::LeastSquares),
            "crossover" => Operator::Crossover,
            _ => return None,
        })
    }
}

/// Operator plus the indices it consumed: the parent slot for a mutation,
/// the two offspring indices for a crossover.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Lineage {
    pub op: Operator,
    pub parents: (usize, Option<usize>),
}

impl Lineage {
    pub fn initial(slot: usize) -> Self {
        Self { op: Operator::Initial, parents: (slot, None) }
    }

    pub fn mutation(kind: MutationKind, parent: usize) -> Self {
        Self { op: Operator::Mutation(kind), parents: (parent, None) }
    }

    pub fn crossover(x: usize, y: usize) -> Self {
        Self { op: Operator::Crossover, parents: (x, Some(y)) }
    }
}

impl fmt::Display for Lineage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.parents {
            (a, Some(b)) => write!(f, "{}({a}+{b})", self.op.tag()),
            (a, None) => write!(f, "{}({a})", self.op.tag()),
        }
    }
}

/// One generator candidate.
#[derive(Clone, Debug)]
pub struct Individual {
    pub params: ParamVector,
    pub adam: AdamState,
    pub lineage: Lineage,
    pub fitness: Option<f64>,
    /// Set when a non-finite loss or gradient was hit; fitness is then -inf.
    pub failed: bool,
    /// `G(z)` on the generation's shared evaluation batch.
    pub cached_samples: Option<Tensor>,
    /// `C(G(z))` on the same batch.
    pub cached_logits: Option<Vec<f64>>,
}

impl Individual {
    pub fn new(params: ParamVector, lineage: Lineage) -> Self {
        let adam = AdamState::new(params.len());
        Self { params, adam, lineage, fitness: None, failed: false, cached_samples: None, cached_logits: None }
    }

    /// Fitness used for ranking: -inf for failed or unevaluated individuals.
    pub fn rank_fitness(&self) -> f64 {
        if self.failed {
            f64::NEG_INFINITY
        } else {
            self.fitness.unwrap_or(f64::NEG_INFINITY)
        }
    }

    pub fn mark_failed(&mut self) {
        self.failed = true;
        self.fitness = Some(f64::NEG_INFINITY);
        self.cached_samples = None;
        self.cached_logits = None;
    }

    pub fn clear_cache(&mut self) {
        self.cached_samples = None;
        self.cached_logits = None;
    }
}
