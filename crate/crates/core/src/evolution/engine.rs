use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{Tape, Tensor};
use crate::data::{sample_noise, stream_rng, Dataset, NoiseSpec, Stream};
use crate::fitness::FitnessKind;
use crate::nets::{adam_step, init_params, AdamState, Discriminator, Generator, MlpSpec, ParamVector};
use crate::objectives::{d_loss, gp_term};
use crate::{Error, Result};

use super::operators::{crossover, evaluate, mutate, score_pairs, select, Arena, CrossoverOutcome, CrossoverSettings, PairScore};
use super::{EvolutionConfig, Individual, Lineage};

/// Wall time spent in each phase of one generation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTiming {
    pub discriminator: Duration,
    pub mutation: Duration,
    pub crossover: Duration,
    pub selection: Duration,
}

/// What happened in one generation.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRecord {
    /// 1-based index of the generation this record closes.
    pub generation: u64,
    /// Mean discriminator objective over the generation's updates.
    pub d_loss: f64,
    /// Every candidate in pool order: mutants by (parent, operator), then
    /// crossover children.
    pub offspring: Vec<(Lineage, f64)>,
    /// All scored mutant pairs, best first. The first `n_c` were crossed.
    pub pairs: Vec<PairScore>,
    /// Pool indices of the new parents, best first.
    pub selected: Vec<usize>,
    pub timing: PhaseTiming,
}

impl GenerationRecord {
    pub fn selected_lineages(&self) -> impl Iterator<Item = Lineage> + '_ {
        self.selected.iter().map(|&i| self.offspring[i].0)
    }
}

/// Everything a step produced. `pool` keeps the evaluated candidates with
/// their cached samples; `crossovers` keeps the distillation traces.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub record: GenerationRecord,
    pub pool: Vec<Individual>,
    pub crossovers: Vec<CrossoverOutcome>,
    /// Shared evaluation noise of this generation.
    pub eval_noise: Tensor,
}

/// Population of generators evolving against one discriminator.
#[derive(Clone, Debug)]
pub struct Engine {
    config: EvolutionConfig,
    gen: Generator,
    disc: Discriminator,
    dataset: Dataset,
    noise: NoiseSpec,
    omega: ParamVector,
    disc_adam: AdamState,
    parents: Vec<Individual>,
    generation: u64,
    data_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    penalty_rng: ChaCha8Rng,
}

/// Initial weights for the discriminator and each parent slot, drawn from
/// a dedicated stream of the run seed.
pub fn initial_networks(seed: u64, gen_spec: &MlpSpec, disc_spec: &MlpSpec, mu: usize) -> (ParamVector, Vec<ParamVector>) {
    let mut rng = stream_rng(seed, Stream::Init);
    let omega = init_params(disc_spec, rng.random());
    let thetas = (0..mu).map(|_| init_params(gen_spec, rng.random())).collect();
    (omega, thetas)
}

impl Engine {
    pub fn new(
        config: EvolutionConfig,
        gen_spec: MlpSpec,
        disc_spec: MlpSpec,
        dataset: Dataset,
        noise: NoiseSpec,
    ) -> Result<Self> {
        config.validate()?;
        noise.validate()?;
        if gen_spec.input_dim() != noise.dim {
            return Err(Error::Config(format!(
                "generator input {} does not match noise dim {}",
                gen_spec.input_dim(),
                noise.dim
            )));
        }
        if gen_spec.output_dim() != dataset.dim() || disc_spec.input_dim() != dataset.dim() {
            return Err(Error::Config(format!(
                "data dim {} must match generator output {} and discriminator input {}",
                dataset.dim(),
                gen_spec.output_dim(),
                disc_spec.input_dim()
            )));
        }
        let (omega, thetas) = initial_networks(config.seed, &gen_spec, &disc_spec, config.mu);
        let parents = thetas.into_iter().enumerate().map(|(j, t)| Individual::new(t, Lineage::initial(j))).collect();
        let seed = config.seed;
        Ok(Self {
            disc_adam: AdamState::new(omega.len()),
            gen: Generator::new(gen_spec)?,
            disc: Discriminator::new(disc_spec)?,
            config,
            dataset,
            noise,
            omega,
            parents,
            generation: 0,
            data_rng: stream_rng(seed, Stream::Data),
            noise_rng: stream_rng(seed, Stream::Noise),
            penalty_rng: stream_rng(seed, Stream::Penalty),
        })
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.config
    }
    pub fn generator(&self) -> &Generator {
        &self.gen
    }
    pub fn discriminator(&self) -> &Discriminator {
        &self.disc
    }
    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }
    pub fn noise_spec(&self) -> &NoiseSpec {
        &self.noise
    }
    pub fn omega(&self) -> &ParamVector {
        &self.omega
    }
    pub fn disc_adam(&self) -> &AdamState {
        &self.disc_adam
    }
    pub fn parents(&self) -> &[Individual] {
        &self.parents
    }
    /// Number of completed generations.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn arena(&self) -> Arena<'_> {
        Arena { gen: &self.gen, disc: &self.disc, omega: &self.omega }
    }

    /// `n_d` discriminator updates; returns the mean loss.
    fn update_discriminator(&mut self) -> Result<f64> {
        let cfg = &self.config;
        let per = cfg.m / cfg.mu;
        let adam = cfg.adam();
        let mut total = 0.0;
        for _ in 0..cfg.n_d {
            let real = self.dataset.sample(cfg.m, &mut self.data_rng);
            let z = sample_noise(&self.noise, cfg.m, &mut self.noise_rng);
            let fakes = self
                .parents
                .iter()
                .enumerate()
                .map(|(j, p)| self.gen.forward(&p.params, &z.slice_rows(j * per, (j + 1) * per)))
                .collect::<Result<Vec<_>, _>>()?;
            let mut tape = Tape::new();
            let w = tape.leaf("omega", self.omega.to_tensor());
            let mut loss = d_loss(&mut tape, &self.disc, w, &real, &fakes)?;
            if cfg.gp_lambda > 0.0 {
                let fake = Tensor::vstack(&fakes);
                let gp = gp_term(&mut tape, &self.disc, w, &real, &fake, cfg.gp_lambda, &mut self.penalty_rng)?;
                loss = tape.add(loss, gp)?;
            }
            total += tape.value(loss).item();
            let grads = tape.backward(loss)?;
            adam_step(&mut self.omega, grads.wrt(w).data(), &mut self.disc_adam, &adam)?;
        }
        Ok(total / cfg.n_d as f64)
    }

    /// Runs one full generation: discriminator updates, mutation and
    /// evaluation, pair scoring and crossover, then greedy selection.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let mut timing = PhaseTiming::default();
        let t0 = Instant::now();
        let d_loss = self.update_discriminator()?;
        timing.discriminator = t0.elapsed();

        // Mutation: one noise batch per parent, shared by its operators.
        let t1 = Instant::now();
        let cfg = self.config.clone();
        let batches: Vec<Tensor> =
            (0..cfg.mu).map(|_| sample_noise(&self.noise, cfg.m, &mut self.noise_rng)).collect();
        let eval_noise = sample_noise(&self.noise, cfg.n, &mut self.noise_rng);
        let eval_real = match cfg.fitness {
            FitnessKind::Egan => Some(self.dataset.sample(cfg.n, &mut self.data_rng)),
            FitnessKind::Cgan => None,
        };
        let jobs: Vec<(usize, usize)> =
            (0..cfg.mu).flat_map(|j| (0..cfg.n_m()).map(move |h| (j, h))).collect();
        let arena = self.arena();
        let make_mutant = |&(j, h): &(usize, usize)| -> Result<Individual> {
            let mut child = mutate(arena, &self.parents[j], j, cfg.mutations[h], &batches[j], &cfg.adam())?;
            evaluate(arena, &mut child, &eval_noise, eval_real.as_ref(), cfg.fitness, cfg.gamma)?;
            Ok(child)
        };
        let mutants: Vec<Individual> = if cfg.parallel {
            jobs.par_iter().map(make_mutant).collect::<Result<_>>()?
        } else {
            jobs.iter().map(make_mutant).collect::<Result<_>>()?
        };
        timing.mutation = t1.elapsed();

        // Crossover on the best-scoring pairs, reusing cached samples.
        let t2 = Instant::now();
        let fitness: Vec<f64> = mutants.iter().map(Individual::rank_fitness).collect();
        let pairs = score_pairs(&fitness);
        let settings = CrossoverSettings {
            k_cross: cfg.k_cross,
            basis: cfg.crossover_basis,
            tie: cfg.tie_rule,
            norm: cfg.distill_norm,
            adam: cfg.adam(),
        };
        let chosen: Vec<PairScore> = pairs.iter().take(cfg.n_c).copied().collect();
        let make_child = |p: &PairScore| -> Result<CrossoverOutcome> {
            let mut out = crossover(arena, &mutants[p.i], &mutants[p.j], p.i, p.j, &eval_noise, &settings)?;
            evaluate(arena, &mut out.child, &eval_noise, eval_real.as_ref(), cfg.fitness, cfg.gamma)?;
            Ok(out)
        };
        let crossovers: Vec<CrossoverOutcome> = if cfg.parallel {
            chosen.par_iter().map(make_child).collect::<Result<_>>()?
        } else {
            chosen.iter().map(make_child).collect::<Result<_>>()?
        };
        timing.crossover = t2.elapsed();

        // Selection over mutants and crossover children; parents are dropped.
        let t3 = Instant::now();
        let mut pool = mutants;
        pool.extend(crossovers.iter().map(|c| c.child.clone()));
        if pool.iter().all(|i| i.failed) {
            return Err(Error::AllOffspringFailed { generation: self.generation + 1 });
        }
        let selected = select(&pool, cfg.mu)?;
        self.parents = selected
            .iter()
            .map(|&i| {
                let mut p = pool[i].clone();
                p.clear_cache();
                p
            })
            .collect();
        timing.selection = t3.elapsed();

        self.generation += 1;
        let record = GenerationRecord {
            generation: self.generation,
            d_loss,
            offspring: pool.iter().map(|i| (i.lineage, i.rank_fitness())).collect(),
            pairs,
            selected,
            timing,
        };
        Ok(StepOutcome { record, pool, crossovers, eval_noise })
    }

    /// Index of the fittest current parent (0 before the first step).
    pub fn best_parent(&self) -> &Individual {
        let idx = select(&self.parents, 1).map(|v| v[0]).unwrap_or(0);
        &self.parents[idx]
    }
}
