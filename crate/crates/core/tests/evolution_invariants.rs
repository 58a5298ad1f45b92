use std::collections::HashSet;

use cegan::data::{Dataset, DatasetSpec, NoiseSpec};
use cegan::evolution::{
    score_pairs, Engine, EvolutionConfig, GenerationRecord, Lineage, Operator, PhaseTiming,
};
use cegan::fitness::FitnessKind;
use cegan::nets::{Activation, MlpSpec};
use cegan::objectives::MutationKind;

fn small_engine(cfg: EvolutionConfig) -> Engine {
    let gen = MlpSpec::new(vec![8, 16, 2], Activation::Tanh, Activation::Identity).unwrap();
    let disc = MlpSpec::new(vec![2, 16, 1], Activation::Relu, Activation::Identity).unwrap();
    let data = Dataset::from_spec(&DatasetSpec::ring8()).unwrap();
    Engine::new(cfg, gen, disc, data, NoiseSpec::default()).unwrap()
}

fn config(mu: usize, mutations: &[MutationKind], n_c: usize) -> EvolutionConfig {
    EvolutionConfig {
        mu,
        mutations: mutations.to_vec(),
        n_c,
        m: 8,
        n: 32,
        alpha: 1e-3,
        seed: 11,
        ..EvolutionConfig::default()
    }
}

fn without_timing(mut r: GenerationRecord) -> GenerationRecord {
    r.timing = PhaseTiming::default();
    r
}

fn records(cfg: EvolutionConfig, gens: usize) -> Vec<GenerationRecord> {
    let mut e = small_engine(cfg);
    (0..gens).map(|_| without_timing(e.step().unwrap().record)).collect()
}

#[test]
fn population_size_is_constant() {
    let mut e = small_engine(config(2, &MutationKind::ALL, 2));
    for _ in 0..10 {
        let out = e.step().unwrap();
        assert_eq!(out.pool.len(), 2 * 3 + 2);
        assert_eq!(out.record.selected.len(), 2);
        assert_eq!(e.parents().len(), 2);
    }
}

#[test]
fn single_parent_selection_is_greedy() {
    let mut e = small_engine(config(1, &MutationKind::ALL, 1));
    for _ in 0..10 {
        let out = e.step().unwrap();
        let best = out.record.offspring.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.record.offspring[out.record.selected[0]].1, best);
        assert_eq!(e.parents()[0].params, out.pool[out.record.selected[0]].params);
    }
}

#[test]
fn parents_are_not_carried_over() {
    let mut e = small_engine(config(2, &MutationKind::ALL, 1));
    for _ in 0..5 {
        let before: HashSet<u64> = e.parents().iter().map(|p| p.params.bit_hash()).collect();
        let out = e.step().unwrap();
        for ind in &out.pool {
            assert!(!before.contains(&ind.params.bit_hash()), "{}", ind.lineage);
            assert_ne!(ind.lineage.op, Operator::Initial);
        }
        let pool: HashSet<u64> = out.pool.iter().map(|p| p.params.bit_hash()).collect();
        assert!(e.parents().iter().all(|p| pool.contains(&p.params.bit_hash())));
    }
}

#[test]
fn crossover_children_come_from_the_top_pairs() {
    let mut e = small_engine(config(2, &MutationKind::ALL, 3));
    for _ in 0..5 {
        let out = e.step().unwrap();
        let mutants = 6;
        let fitness: Vec<f64> = out.record.offspring[..mutants].iter().map(|o| o.1).collect();
        let pairs = score_pairs(&fitness);
        assert_eq!(pairs, out.record.pairs);
        for (k, child) in out.record.offspring[mutants..].iter().enumerate() {
            assert_eq!(child.0, Lineage::crossover(pairs[k].i, pairs[k].j));
        }
        // The crossed mutants keep their parameters.
        for c in &out.crossovers {
            let (i, j) = (c.child.lineage.parents.0, c.child.lineage.parents.1.unwrap());
            assert_ne!(c.child.params.bit_hash(), out.pool[i].params.bit_hash());
            assert_ne!(c.child.params.bit_hash(), out.pool[j].params.bit_hash());
        }
    }
}

#[test]
fn plain_gan_reduction_has_one_candidate() {
    let recs = records(config(1, &[MutationKind::Heuristic], 0), 5);
    for r in recs {
        assert_eq!(r.offspring.len(), 1);
        assert!(r.pairs.is_empty());
        assert_eq!(r.selected, vec![0]);
        assert_eq!(r.offspring[0].0, Lineage::mutation(MutationKind::Heuristic, 0));
    }
}

#[test]
fn default_population_evaluates_four_candidates_and_three_pairs() {
    let r = records(config(1, &MutationKind::ALL, 1), 1).remove(0);
    assert_eq!(r.offspring.len(), 4);
    assert_eq!(r.pairs.len(), 3);
}

#[test]
fn runs_are_deterministic() {
    let cfg = config(2, &MutationKind::ALL, 2);
    assert_eq!(records(cfg.clone(), 8), records(cfg, 8));
    let mut egan = config(2, &MutationKind::ALL, 0);
    egan.fitness = FitnessKind::Egan;
    assert_eq!(records(egan.clone(), 4), records(egan, 4));
}

#[test]
fn parallel_offspring_match_sequential() {
    let seq = config(2, &MutationKind::ALL, 2);
    let par = EvolutionConfig { parallel: true, ..seq.clone() };
    assert_eq!(records(seq, 8), records(par, 8));
}

#[test]
fn different_seeds_diverge() {
    let a = config(1, &MutationKind::ALL, 1);
    let b = EvolutionConfig { seed: 12, ..a.clone() };
    assert_ne!(records(a, 1), records(b, 1));
}
