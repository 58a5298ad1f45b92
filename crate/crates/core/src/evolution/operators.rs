use std::cmp::Ordering;

use crate::autodiff::{Tape, Tensor};
use crate::fitness::{report_from_samples, FitnessKind};
use crate::nets::{adam_step, AdamConfig, Discriminator, Generator, NetError, ParamVector};
use crate::objectives::{
    distillation_loss_to, distillation_targets, mutation_loss, DistillNorm, DistillTargets, MutationKind, TiePolicy,
};
use crate::{Error, Result};

use super::{CrossoverBasis, Individual, Lineage, TieRule};

/// The frozen discriminator that offspring are produced and judged against.
#[derive(Clone, Copy)]
pub struct Arena<'a> {
    pub gen: &'a Generator,
    pub disc: &'a Discriminator,
    pub omega: &'a ParamVector,
}

/// Errors that mark an offspring as failed instead of aborting the step.
fn is_numeric_failure(err: &Error) -> bool {
    matches!(
        err,
        Error::Net(NetError::NonFiniteGradient { .. })
            | Error::Autodiff(crate::autodiff::AutodiffError::NonPositiveLog { .. })
    )
}

fn mutation_gradient(arena: Arena<'_>, theta: &ParamVector, kind: MutationKind, z: &Tensor) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let t = tape.leaf("theta", theta.to_tensor());
    let zv = tape.constant(z.clone());
    let om = tape.constant(arena.omega.to_tensor());
    let fake = arena.gen.record(&mut tape, t, zv)?;
    let d = arena.disc.record_probs(&mut tape, om, fake)?;
    let loss = mutation_loss(&mut tape, kind, d)?;
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss).item(), grads.wrt(t).into_data()))
}

/// Value and gradient of the mutation loss `kind` for generator parameters
/// `theta` on noise `z`.
pub fn mutation_objective(
    arena: Arena<'_>,
    theta: &ParamVector,
    kind: MutationKind,
    z: &Tensor,
) -> Result<(f64, Vec<f64>)> {
    mutation_gradient(arena, theta, kind, z)
}

/// One Adam step of `parent` on the mutation loss `kind`. The child inherits
/// a copy of the parent's optimizer state.
pub fn mutate(
    arena: Arena<'_>,
    parent: &Individual,
    parent_index: usize,
    kind: MutationKind,
    z: &Tensor,
    adam: &AdamConfig,
) -> Result<Individual> {
    let mut child = Individual::new(parent.params.clone(), Lineage::mutation(kind, parent_index));
    child.adam = parent.adam.clone();
    let outcome = mutation_gradient(arena, &parent.params, kind, z).and_then(|(loss, grad)| {
        if !loss.is_finite() {
            return Err(NetError::NonFiniteGradient { index: usize::MAX, value: loss }.into());
        }
        adam_step(&mut child.params, &grad, &mut child.adam, adam).map_err(Error::from)
    });
    match outcome {
        Ok(()) => Ok(child),
        Err(e) if is_numeric_failure(&e) => {
            child.params = parent.params.clone();
            child.adam = parent.adam.clone();
            child.mark_failed();
            Ok(child)
        }
        Err(e) => Err(e),
    }
}

/// Fills samples, logits and fitness of `ind` on the shared evaluation batch.
pub fn evaluate(
    arena: Arena<'_>,
    ind: &mut Individual,
    z_eval: &Tensor,
    real_eval: Option<&Tensor>,
    kind: FitnessKind,
    gamma: f64,
) -> Result<()> {
    if ind.failed {
        ind.mark_failed();
        return Ok(());
    }
    let samples = arena.gen.forward(&ind.params, z_eval)?;
    if !samples.is_finite() {
        ind.mark_failed();
        return Ok(());
    }
    let logits = arena.disc.logits(arena.omega, &samples)?;
    let report = report_from_samples(kind, arena.disc, arena.omega, &samples, &logits, real_eval, gamma)?;
    if !report.combined.is_finite() {
        ind.mark_failed();
        return Ok(());
    }
    ind.fitness = Some(report.combined);
    ind.cached_samples = Some(samples);
    ind.cached_logits = Some(logits);
    Ok(())
}

/// Greedy crossover pair score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairScore {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Scores every unordered pair of usable offspring (`w = F_i + F_j`) and
/// sorts descending by `w`, then by the larger member fitness, then by
/// `(i, j)` ascending. Non-finite fitness values are left out.
pub fn score_pairs(fitness: &[f64]) -> Vec<PairScore> {
    let mut pairs = Vec::new();
    for i in 0..fitness.len() {
        if !fitness[i].is_finite() {
            continue;
        }
        for j in i + 1..fitness.len() {
            if fitness[j].is_finite() {
                pairs.push(PairScore { i, j, w: fitness[i] + fitness[j] });
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.w.total_cmp(&a.w)
            .then_with(|| {
                let ma = fitness[a.i].max(fitness[a.j]);
                let mb = fitness[b.i].max(fitness[b.j]);
                mb.total_cmp(&ma)
            })
            .then_with(|| (a.i, a.j).cmp(&(b.i, b.j)))
    });
    pairs
}

/// Settings shared by every crossover call.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossoverSettings {
    pub k_cross: usize,
    pub basis: CrossoverBasis,
    pub tie: TieRule,
    pub norm: DistillNorm,
    pub adam: AdamConfig,
}

/// Result of a crossover, including the distillation loss seen before each
/// Adam step.
#[derive(Clone, Debug)]
pub struct CrossoverOutcome {
    pub child: Individual,
    pub targets: DistillTargets,
    pub losses: Vec<f64>,
    /// `true` when the child was initialized from `x`.
    pub basis_is_x: bool,
}

fn cached_or_eval(arena: Arena<'_>, ind: &Individual, z: &Tensor) -> Result<(Tensor, Vec<f64>)> {
    match (&ind.cached_samples, &ind.cached_logits) {
        (Some(s), Some(l)) if s.rows() == z.rows() => Ok((s.clone(), l.clone())),
        _ => {
            let s = arena.gen.forward(&ind.params, z)?;
            let l = arena.disc.logits(arena.omega, &s)?;
            Ok((s, l))
        }
    }
}

/// Distillation loss of generator parameters `theta` against fixed targets.
pub fn distillation_value(
    gen: &Generator,
    theta: &ParamVector,
    z: &Tensor,
    targets: &DistillTargets,
    norm: DistillNorm,
) -> Result<f64> {
    let mut tape = Tape::new();
    let t = tape.constant(theta.to_tensor());
    let zv = tape.constant(z.clone());
    let out = gen.record(&mut tape, t, zv)?;
    let loss = distillation_loss_to(&mut tape, out, targets, norm)?;
    Ok(tape.value(loss).item())
}

/// Runs `steps` Adam steps of `child` on the distillation loss and returns
/// the loss observed before each step.
pub fn distill(
    gen: &Generator,
    child: &mut Individual,
    z: &Tensor,
    targets: &DistillTargets,
    steps: usize,
    norm: DistillNorm,
    adam: &AdamConfig,
) -> Result<Vec<f64>> {
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut tape = Tape::new();
        let t = tape.leaf("theta", child.params.to_tensor());
        let zv = tape.constant(z.clone());
        let out = gen.record(&mut tape, t, zv)?;
        let loss = distillation_loss_to(&mut tape, out, targets, norm)?;
        let value = tape.value(loss).item();
        losses.push(value);
        let grads = tape.backward(loss)?;
        adam_step(&mut child.params, grads.wrt(t).data(), &mut child.adam, adam)?;
    }
    Ok(losses)
}

/// Discriminator-filtered distillation crossover of offspring `x` and `y`
/// (at offspring indices `xi < yi`) on the shared evaluation noise `z`.
///
/// The child starts as a copy (parameters and optimizer state) of the
/// higher-fitness parent, or of the lower-fitness one under
/// [`CrossoverBasis::Worse`]; equal fitness resolves to `x`.
#[allow(clippy::too_many_arguments)]
pub fn crossover(
    arena: Arena<'_>,
    x: &Individual,
    y: &Individual,
    xi: usize,
    yi: usize,
    z: &Tensor,
    settings: &CrossoverSettings,
) -> Result<CrossoverOutcome> {
    let (fx, fy) = (x.rank_fitness(), y.rank_fitness());
    let x_better = fx.total_cmp(&fy) != Ordering::Less;
    let basis_is_x = match settings.basis {
        CrossoverBasis::Better => x_better,
        CrossoverBasis::Worse => !x_better || fx == fy,
    };
    let basis = if basis_is_x { x } else { y };
    let tie = match settings.tie {
        TieRule::Skip => TiePolicy::Skip,
        TieRule::Basis if basis_is_x => TiePolicy::ImitateX,
        TieRule::Basis => TiePolicy::ImitateY,
    };

    let (x_out, c_x) = cached_or_eval(arena, x, z)?;
    let (y_out, c_y) = cached_or_eval(arena, y, z)?;
    let targets = distillation_targets(&x_out, &y_out, &c_x, &c_y, tie)?;

    let mut child = Individual::new(basis.params.clone(), Lineage::crossover(xi, yi));
    child.adam = basis.adam.clone();
    let losses = match distill(arena.gen, &mut child, z, &targets, settings.k_cross, settings.norm, &settings.adam) {
        Ok(l) => l,
        Err(e) if is_numeric_failure(&e) => {
            child.params = basis.params.clone();
            child.adam = basis.adam.clone();
            child.mark_failed();
            Vec::new()
        }
        Err(e) => return Err(e),
    };
    Ok(CrossoverOutcome { child, targets, losses, basis_is_x })
}

/// Pool indices of the `mu` fittest individuals; ties keep pool order.
pub fn select(pool: &[Individual], mu: usize) -> Result<Vec<usize>> {
    if pool.len() < mu {
        return Err(Error::Config(format!("selection pool of {} is smaller than mu = {mu}", pool.len())));
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| pool[b].rank_fitness().total_cmp(&pool[a].rank_fitness()).then(a.cmp(&b)));
    order.truncate(mu);
    Ok(order)
}
