//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. `CEGAN_ACCEPTANCE=1,2,6` runs a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cegan::autodiff::{Tape, Tensor};
use cegan::data::{sample_noise, stream_rng, Dataset, NoiseSpec, Stream};
use cegan::evolution::{
    crossover, distill, distillation_value, initial_networks, CrossoverBasis, CrossoverSettings, Engine,
    EvolutionConfig, StepOutcome,
};
use cegan::fitness::FitnessKind;
use cegan::harness::{
    checkpoint_dir, compare, evaluate, gradcheck_suite, read_metrics, run_training, EvalOptions, RunConfig, TrainingLog,
    FD_TOLERANCE,
};
use cegan::nets::{Checkpoint, MlpSpec, ParamVector};
use cegan::objectives::{d_loss, d_loss_from_probs, mutation_loss, MutationKind};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- 1

fn gradient_correctness() -> Verdict {
    let start = Instant::now();
    let results = gradcheck_suite(50, 2024).expect("suite runs");
    let elapsed = start.elapsed();
    let worst = results.iter().map(|r| r.max_error).fold(0.0, f64::max);
    let names: Vec<String> = results.iter().map(|r| format!("{}={:.1e}", r.objective, r.max_error)).collect();
    verdict(
        results.iter().all(|r| r.passed()) && elapsed < Duration::from_secs(60),
        format!("worst {worst:.2e} < {FD_TOLERANCE:e} in {:.1}s [{}]", elapsed.as_secs_f64(), names.join(", ")),
    )
}

// ---------------------------------------------------------------- 2

fn closed_form_values() -> Verdict {
    let loss_at = |kind: MutationKind, d: f64| {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::matrix(16, 1, vec![d; 16]));
        let l = mutation_loss(&mut tape, kind, p).unwrap();
        tape.value(l).item()
    };
    let mut tape = Tape::new();
    let half = tape.constant(Tensor::matrix(16, 1, vec![0.5; 16]));
    let dl = d_loss_from_probs(&mut tape, half, half).unwrap();
    let dl = tape.value(dl).item();
    let ln_half = 0.5f64.ln();
    let checks = [
        ("minimax", loss_at(MutationKind::Minimax, 0.5), 0.5 * ln_half),
        ("heuristic", loss_at(MutationKind::Heuristic, 0.5), -0.5 * ln_half),
        ("least_squares", loss_at(MutationKind::LeastSquares, 1.0), 0.0),
        ("d_loss", dl, 2.0 * 2f64.ln()),
    ];
    let worst = checks.iter().map(|(_, got, want)| (got - want).abs()).fold(0.0, f64::max);
    let detail = checks.iter().map(|(n, g, _)| format!("{n}={g:.15}")).collect::<Vec<_>>().join(", ");
    verdict(worst <= 1e-12, format!("max deviation {worst:.1e} [{detail}]"))
}

// ---------------------------------------------------------------- 3, 4

fn ring_engine(seed: u64) -> Engine {
    let cfg = RunConfig::default();
    let evo = EvolutionConfig { seed, ..cfg.evolution };
    Engine::new(evo, cfg.generator, cfg.discriminator, Dataset::from_spec(&cfg.data).unwrap(), cfg.noise).unwrap()
}

/// Trains `warmup` generations, then yields `events` steps spaced `every`
/// generations apart.
fn mid_training_events(seed: u64, warmup: usize, every: usize, events: usize, mut f: impl FnMut(&Engine, &StepOutcome)) {
    let mut engine = ring_engine(seed);
    for _ in 0..warmup {
        engine.step().unwrap();
    }
    for _ in 0..events {
        for _ in 0..every - 1 {
            engine.step().unwrap();
        }
        let out = engine.step().unwrap();
        f(&engine, &out);
    }
}

fn crossover_effectiveness() -> Verdict {
    let (mut events, mut not_worse, mut converged) = (0, 0, 0);
    mid_training_events(7, 5000, 100, 30, |engine, out| {
        let cfg = engine.config();
        let mutants = cfg.mutant_count();
        for (k, c) in out.crossovers.iter().enumerate() {
            let (i, j) = (c.child.lineage.parents.0, c.child.lineage.parents.1.unwrap());
            let better = out.pool[i].rank_fitness().max(out.pool[j].rank_fitness());
            let child = out.pool[mutants + k].rank_fitness();
            events += 1;
            not_worse += usize::from(child >= better);

            let mut extra = c.child.clone();
            distill(engine.generator(), &mut extra, &out.eval_noise, &c.targets, cfg.k_cross * 50, cfg.distill_norm, &cfg.adam())
                .unwrap();
            let last = distillation_value(engine.generator(), &extra.params, &out.eval_noise, &c.targets, cfg.distill_norm)
                .unwrap();
            converged += usize::from(last < 0.1 * c.losses[0]);
        }
    });
    let (a, b) = (not_worse as f64 / events as f64, converged as f64 / events as f64);
    verdict(
        events >= 30 && a >= 0.5 && b >= 0.8,
        format!("{events} events: child >= better parent in {:.0}%, loss < 10% of initial in {:.0}%", 100.0 * a, 100.0 * b),
    )
}

fn better_parent_initialization() -> Verdict {
    let mut wins = 0;
    let mut trials = 0;
    mid_training_events(8, 5000, 100, 20, |engine, out| {
        let cfg = engine.config();
        let p = out.record.pairs[0];
        let run = |basis| {
            let settings = CrossoverSettings {
                k_cross: 50,
                basis,
                tie: cfg.tie_rule,
                norm: cfg.distill_norm,
                adam: cfg.adam(),
            };
            let c = crossover(engine.arena(), &out.pool[p.i], &out.pool[p.j], p.i, p.j, &out.eval_noise, &settings).unwrap();
            distillation_value(engine.generator(), &c.child.params, &out.eval_noise, &c.targets, cfg.distill_norm).unwrap()
        };
        trials += 1;
        wins += usize::from(run(CrossoverBasis::Better) < run(CrossoverBasis::Worse));
    });
    verdict(
        wins as f64 >= 0.7 * trials as f64,
        format!("better-parent child strictly lower in {wins}/{trials} trials"),
    )
}

// ---------------------------------------------------------------- 5

fn mode_recovery(root: &Path) -> Verdict {
    let mut cegan = RunConfig::default();
    cegan.evolution.iterations = 20_000;
    cegan.run.log_every = 1000;
    cegan.run.checkpoint_every = 0;
    let mut minimax = cegan.clone();
    minimax.evolution.mutations = vec![MutationKind::Minimax];
    minimax.evolution.n_c = 0;
    let start = Instant::now();
    let rows = compare(&[("cegan".into(), cegan), ("minimax".into(), minimax)], &[1, 2, 3, 4, 5], root).unwrap();
    // "Within 20k generations": any logged evaluation counts, not only the last one.
    let good = (1..=5u64)
        .filter(|s| {
            let path = root.join("cegan").join(format!("seed_{s}")).join("metrics.csv");
            read_metrics(&path).unwrap().iter().any(|&(_, modes, ratio)| modes >= 7 && ratio >= 0.6)
        })
        .count();
    let fmt = |r: &cegan::harness::CompareRow| {
        r.per_seed.iter().map(|(m, q)| format!("{m}/{q:.2}")).collect::<Vec<_>>().join(" ")
    };
    verdict(
        good >= 3 && rows[1].modes_mean < rows[0].modes_mean,
        format!(
            "cegan seeds reaching 7 modes & ratio 0.6: {good}/5, final [{}], mean modes {:.1} vs minimax {:.1} [{}] ({:.0}s)",
            fmt(&rows[0]),
            rows[0].modes_mean,
            rows[1].modes_mean,
            fmt(&rows[1]),
            start.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 6

/// Minimal E-GAN written directly against the network and loss primitives:
/// discriminator steps, every parent mutated by every loss, fitness
/// `mean D + gamma * (-log ||grad||)`, keep the best `mu`.
struct EganOracle {
    cfg: EvolutionConfig,
    gen: cegan::nets::Generator,
    disc: cegan::nets::Discriminator,
    data: Dataset,
    noise: NoiseSpec,
    omega: Vec<f64>,
    omega_moments: (Vec<f64>, Vec<f64>, i32),
    parents: Vec<(Vec<f64>, (Vec<f64>, Vec<f64>, i32))>,
    data_rng: rand_chacha::ChaCha8Rng,
    noise_rng: rand_chacha::ChaCha8Rng,
}

fn oracle_adam(p: &mut [f64], g: &[f64], st: &mut (Vec<f64>, Vec<f64>, i32), cfg: &EvolutionConfig) {
    st.2 += 1;
    let (c1, c2) = (1.0 - cfg.beta1.powi(st.2), 1.0 - cfg.beta2.powi(st.2));
    for k in 0..p.len() {
        st.0[k] = cfg.beta1 * st.0[k] + (1.0 - cfg.beta1) * g[k];
        st.1[k] = cfg.beta2 * st.1[k] + (1.0 - cfg.beta2) * g[k] * g[k];
        p[k] -= cfg.alpha * (st.0[k] / c1) / ((st.1[k] / c2).sqrt() + 1e-8);
    }
}

fn oracle_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        x.exp() / (1.0 + x.exp())
    }
}

impl EganOracle {
    fn new(cfg: EvolutionConfig, gspec: MlpSpec, dspec: MlpSpec, data: Dataset, noise: NoiseSpec) -> Self {
        let (omega, thetas) = initial_networks(cfg.seed, &gspec, &dspec, cfg.mu);
        let zeros = |n: usize| (vec![0.0; n], vec![0.0; n], 0);
        Self {
            omega_moments: zeros(omega.len()),
            omega: omega.as_slice().to_vec(),
            parents: thetas.iter().map(|t| (t.as_slice().to_vec(), zeros(t.len()))).collect(),
            gen: cegan::nets::Generator::new(gspec).unwrap(),
            disc: cegan::nets::Discriminator::new(dspec).unwrap(),
            data_rng: stream_rng(cfg.seed, Stream::Data),
            noise_rng: stream_rng(cfg.seed, Stream::Noise),
            cfg,
            data,
            noise,
        }
    }

    fn d_grad(&self, real: &Tensor, fakes: &[Tensor]) -> Vec<f64> {
        let mut tape = Tape::new();
        let w = tape.leaf("w", Tensor::vector(self.omega.clone()));
        let l = d_loss(&mut tape, &self.disc, w, real, fakes).unwrap();
        tape.backward(l).unwrap().wrt(w).into_data()
    }

    /// Returns every offspring's parameters and the selected indices.
    fn generation(&mut self) -> (Vec<Vec<f64>>, Vec<usize>) {
        let c = self.cfg.clone();
        let per = c.m / c.mu;
        for _ in 0..c.n_d {
            let real = self.data.sample(c.m, &mut self.data_rng);
            let z = sample_noise(&self.noise, c.m, &mut self.noise_rng);
            let fakes: Vec<Tensor> = (0..c.mu)
                .map(|j| {
                    let theta = ParamVector::from_vec(self.parents[j].0.clone());
                    self.gen.forward(&theta, &z.slice_rows(j * per, (j + 1) * per)).unwrap()
                })
                .collect();
            let g = self.d_grad(&real, &fakes);
            oracle_adam(&mut self.omega, &g, &mut self.omega_moments, &c);
        }
        let batches: Vec<Tensor> = (0..c.mu).map(|_| sample_noise(&self.noise, c.m, &mut self.noise_rng)).collect();
        let z_eval = sample_noise(&self.noise, c.n, &mut self.noise_rng);
        let real_eval = self.data.sample(c.n, &mut self.data_rng);
        let omega = ParamVector::from_vec(self.omega.clone());

        let mut kids = Vec::new();
        for j in 0..c.mu {
            for &kind in &c.mutations {
                let mut tape = Tape::new();
                let t = tape.leaf("t", Tensor::vector(self.parents[j].0.clone()));
                let zv = tape.constant(batches[j].clone());
                let om = tape.constant(Tensor::vector(self.omega.clone()));
                let fake = self.gen.record(&mut tape, t, zv).unwrap();
                let d = self.disc.record_probs(&mut tape, om, fake).unwrap();
                let l = mutation_loss(&mut tape, kind, d).unwrap();
                let g = tape.backward(l).unwrap().wrt(t).into_data();
                let (mut p, mut st) = self.parents[j].clone();
                oracle_adam(&mut p, &g, &mut st, &c);

                let samples = self.gen.forward(&ParamVector::from_vec(p.clone()), &z_eval).unwrap();
                let logits = self.disc.logits(&omega, &samples).unwrap();
                let q = logits.iter().map(|&x| oracle_sigmoid(x)).sum::<f64>() / logits.len() as f64;
                let grad = self.d_grad(&real_eval, std::slice::from_ref(&samples));
                let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
                let f = q + c.gamma * -(norm + 1e-12).ln();
                kids.push((p, st, f));
            }
        }
        let mut chosen: Vec<usize> = Vec::new();
        while chosen.len() < c.mu {
            let best = (0..kids.len())
                .filter(|k| !chosen.contains(k))
                .fold(None, |acc: Option<usize>, k| match acc {
                    Some(b) if kids[b].2 >= kids[k].2 => Some(b),
                    _ => Some(k),
                })
                .unwrap();
            chosen.push(best);
        }
        self.parents = chosen.iter().map(|&k| (kids[k].0.clone(), kids[k].1.clone())).collect();
        (kids.into_iter().map(|k| k.0).collect(), chosen)
    }
}

fn egan_reduction() -> Verdict {
    let base = RunConfig::default();
    let cfg = EvolutionConfig { mu: 2, n_c: 0, fitness: FitnessKind::Egan, seed: 99, ..base.evolution };
    let data = Dataset::from_spec(&base.data).unwrap();
    let mut engine =
        Engine::new(cfg.clone(), base.generator.clone(), base.discriminator.clone(), data.clone(), base.noise).unwrap();
    let mut oracle = EganOracle::new(cfg, base.generator, base.discriminator, data, base.noise);
    for g in 1..=100 {
        let out = engine.step().unwrap();
        let (kids, chosen) = oracle.generation();
        let same_params = out.pool.len() == kids.len()
            && out.pool.iter().zip(&kids).all(|(a, b)| a.params.as_slice().iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        if !same_params || out.record.selected != chosen {
            return verdict(false, format!("diverged at generation {g}: selected {:?} vs oracle {chosen:?}", out.record.selected));
        }
    }
    verdict(true, "100 generations, mu = 2, offspring parameters and selections bit-identical")
}

// ---------------------------------------------------------------- 7

fn brute_force_pairs(fitness: &[f64]) -> Vec<(usize, usize, f64)> {
    let mut left: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..fitness.len() {
        for j in 0..fitness.len() {
            if i < j && fitness[i].is_finite() && fitness[j].is_finite() {
                left.push((i, j, fitness[i] + fitness[j]));
            }
        }
    }
    let key = |p: &(usize, usize, f64)| (p.2, fitness[p.0].max(fitness[p.1]));
    let mut out = Vec::new();
    while !left.is_empty() {
        let mut b = 0;
        for k in 1..left.len() {
            let (kb, kk) = (key(&left[b]), key(&left[k]));
            if kk.0 > kb.0 || (kk.0 == kb.0 && kk.1 > kb.1) {
                b = k;
            }
        }
        out.push(left.remove(b));
    }
    out
}

fn operator_accounting(root: &Path) -> Verdict {
    let mut problems = Vec::new();
    let mut checked = 0;
    for (name, mu, n_c) in [("mu1", 1, 1), ("mu2", 2, 2)] {
        let mut cfg = RunConfig::default();
        cfg.evolution.mu = mu;
        cfg.evolution.n_c = n_c;
        cfg.evolution.iterations = 300;
        cfg.evolution.seed = 5;
        cfg.run.output_dir = Some(root.join(name));
        run_training(&cfg).unwrap();
        let log = TrainingLog::read(&root.join(name).join("log.csv")).unwrap();
        let total = log.selection_stats(50).total();
        if total != mu * 300 {
            problems.push(format!("{name}: {total} selections for {} slots", mu * 300));
        }
        let mutants = cfg.evolution.mutant_count();
        for r in log.records() {
            let fit: Vec<f64> = r.offspring[..mutants].iter().map(|o| o.1).collect();
            let logged: Vec<(usize, usize, u64)> = r.pairs.iter().map(|p| (p.i, p.j, p.w.to_bits())).collect();
            let brute: Vec<(usize, usize, u64)> = brute_force_pairs(&fit).iter().map(|p| (p.0, p.1, p.2.to_bits())).collect();
            if logged != brute {
                problems.push(format!("{name} generation {}: pair list differs", r.generation));
            }
            checked += 1;
        }
    }
    verdict(problems.is_empty(), if problems.is_empty() { format!("{checked} generations, sums and pair lists exact") } else { problems.join("; ") })
}

// ---------------------------------------------------------------- 8

fn determinism(root: &Path) -> Verdict {
    let run = |name: &str, parallel: bool| {
        let mut cfg = RunConfig::default();
        cfg.evolution.mu = 2;
        cfg.evolution.n_c = 2;
        cfg.evolution.iterations = 200;
        cfg.evolution.parallel = parallel;
        cfg.run.log_every = 50;
        cfg.run.output_dir = Some(root.join(name));
        run_training(&cfg).unwrap();
        ["log.csv", "metrics.csv", "samples.csv"].map(|f| std::fs::read(root.join(name).join(f)).unwrap())
    };
    let a = run("a", false);
    let b = run("b", false);
    let p = run("p", true);
    verdict(a == b && a == p, format!("repeat identical: {}, parallel identical: {}", a == b, a == p))
}

// ---------------------------------------------------------------- 9

fn checkpoint_round_trip(root: &Path) -> Verdict {
    let mut cfg = RunConfig::default();
    cfg.evolution.mu = 2;
    cfg.evolution.iterations = 200;
    cfg.run.log_every = 50;
    cfg.run.checkpoint_every = 50;
    cfg.run.output_dir = Some(root.to_path_buf());
    let summary = run_training(&cfg).unwrap();
    let mut problems = Vec::new();
    for row in &summary.metrics {
        let dir = checkpoint_dir(root, row.generation);
        for f in ["parent_0.ceg", "parent_1.ceg", "discriminator.ceg"] {
            let bytes = std::fs::read(dir.join(f)).unwrap();
            if Checkpoint::from_bytes(&bytes).unwrap().to_bytes() != bytes {
                problems.push(format!("gen {} {f}: re-serialization differs", row.generation));
            }
        }
        let opts = EvalOptions {
            dataset: cfg.data.clone(),
            samples: cfg.run.eval_samples,
            seed: cfg.evolution.seed,
            noise_family: cfg.noise.family,
            min_count: cfg.run.min_count,
            samples_csv: None,
        };
        let (report, _) = evaluate(&dir.join("parent_0.ceg"), &opts).unwrap();
        if report != row.coverage {
            problems.push(format!("gen {}: {report:?} vs logged {:?}", row.generation, row.coverage));
        }
    }
    verdict(
        problems.is_empty() && summary.metrics.len() == 4,
        if problems.is_empty() { format!("{} checkpoints reproduce logged coverage exactly", summary.metrics.len()) } else { problems.join("; ") },
    )
}

fn main() -> ExitCode {
    let only: Option<Vec<u32>> = std::env::var("CEGAN_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let tmp = tempfile::tempdir().unwrap();
    let dir = |n: u32| {
        let d = tmp.path().join(format!("c{n}"));
        std::fs::create_dir_all(&d).unwrap();
        d
    };
    type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;
    let criteria: Vec<(u32, &str, Check)> = vec![
        (1, "gradient correctness", Box::new(gradient_correctness)),
        (2, "closed-form loss values", Box::new(closed_form_values)),
        (3, "crossover effectiveness", Box::new(crossover_effectiveness)),
        (4, "better-parent initialization", Box::new(better_parent_initialization)),
        (5, "mode recovery", Box::new(|| mode_recovery(&dir(5)))),
        (6, "E-GAN reduction", Box::new(egan_reduction)),
        (7, "operator accounting", Box::new(|| operator_accounting(&dir(7)))),
        (8, "determinism", Box::new(|| determinism(&dir(8)))),
        (9, "checkpoint round-trip", Box::new(|| checkpoint_round_trip(&dir(9)))),
    ];
    let mut failed = 0;
    for (n, name, check) in &criteria {
        if only.as_ref().is_some_and(|o| !o.contains(n)) {
            continue;
        }
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        failed += usize::from(!v.pass);
        println!(
            "criterion {n} ({name}): {} - {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
