use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::autodiff::Tensor;
use crate::data::{sample_noise, stream_rng, Dataset, DatasetSpec, NoiseFamily, NoiseSpec, Stream};
use crate::evolution::{Engine, Individual, Operator};
use crate::metrics::{mode_coverage, CoverageReport};
use crate::nets::{Checkpoint, Generator, ParamVector};
use crate::{Error, Result};

use super::log::{write_samples, LogWriter, MetricRow, MetricsWriter, TrainingLog, COMPARE_SCHEMA};
use super::RunConfig;

/// What a completed run left behind.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub log: TrainingLog,
    pub metrics: Vec<MetricRow>,
    /// Coverage of the best final parent on the evaluation noise.
    pub final_coverage: Option<CoverageReport>,
}

pub fn checkpoint_dir(output_dir: &Path, generation: u64) -> PathBuf {
    output_dir.join("checkpoints").join(format!("gen_{generation:06}"))
}

/// Parents are written best first as `parent_<j>.ceg`.
fn write_checkpoints(engine: &Engine, output_dir: &Path) -> Result<()> {
    let dir = checkpoint_dir(output_dir, engine.generation());
    std::fs::create_dir_all(&dir)?;
    for (j, p) in engine.parents().iter().enumerate() {
        Checkpoint::new(engine.generator().spec().clone(), p.params.clone(), p.adam.clone())?
            .save(dir.join(format!("parent_{j}.ceg")))?;
    }
    Checkpoint::new(engine.discriminator().spec().clone(), engine.omega().clone(), engine.disc_adam().clone())?
        .save(dir.join("discriminator.ceg"))?;
    Ok(())
}

/// Fixed noise behind every coverage measurement of a run with `seed`.
pub fn evaluation_noise(noise: &NoiseSpec, count: usize, seed: u64) -> Tensor {
    sample_noise(noise, count, &mut stream_rng(seed, Stream::Evaluation))
}

fn coverage(
    gen: &Generator,
    theta: &ParamVector,
    z: &Tensor,
    dataset: &Dataset,
    min_count: usize,
) -> Result<(CoverageReport, Tensor)> {
    let samples = gen.forward(theta, z)?;
    Ok((mode_coverage(&samples, &dataset.centers(), dataset.sigma(), min_count), samples))
}

fn window_selections(log: &TrainingLog, from: usize) -> [usize; 4] {
    let mut counts = [0; 4];
    for rec in &log.records()[from..] {
        for l in rec.selected_lineages() {
            if let Some(k) = Operator::REPORTED.iter().position(|&op| op == l.op) {
                counts[k] += 1;
            }
        }
    }
    counts
}

/// Runs `config.evolution.iterations` generations, writing `config.toml`,
/// `log.csv`, `timing.csv`, `metrics.csv`, checkpoints and, at the end,
/// `samples.csv` into the output directory.
pub fn run_training(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let out = config.resolved_output_dir();
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("config.toml"), config.to_toml()?)?;

    let dataset = Dataset::from_spec(&config.data)?;
    let mut engine = Engine::new(
        config.evolution.clone(),
        config.generator.clone(),
        config.discriminator.clone(),
        dataset.clone(),
        config.noise,
    )?;
    let eval_z = evaluation_noise(&config.noise, config.run.eval_samples, config.evolution.seed);
    let mut log_writer = LogWriter::create(&out)?;
    let mut metrics_writer = MetricsWriter::create(&out)?;
    let mut log = TrainingLog::new();
    let mut metrics = Vec::new();
    let mut last_metric = 0;

    write_checkpoints(&engine, &out)?;
    let iterations = config.evolution.iterations;
    for g in 1..=iterations {
        // Rows written so far are already flushed, so an abort leaves a
        // valid prefix behind.
        let outcome = engine.step()?;
        log_writer.append(&outcome.record)?;
        log.push(outcome.record)?;
        if g % config.run.log_every == 0 {
            let best: &Individual = &engine.parents()[0];
            let (report, _) = coverage(engine.generator(), &best.params, &eval_z, &dataset, config.run.min_count)?;
            let row = MetricRow { generation: g, coverage: report, selections: window_selections(&log, last_metric) };
            metrics_writer.append(&row)?;
            metrics.push(row);
            last_metric = log.len();
        }
        if config.run.checkpoint_every > 0 && g % config.run.checkpoint_every == 0 {
            write_checkpoints(&engine, &out)?;
        }
    }

    let final_coverage = if iterations > 0 {
        if config.run.checkpoint_every == 0 || iterations % config.run.checkpoint_every != 0 {
            write_checkpoints(&engine, &out)?;
        }
        let best = &engine.parents()[0];
        let (report, samples) = coverage(engine.generator(), &best.params, &eval_z, &dataset, config.run.min_count)?;
        write_samples(&out.join("samples.csv"), &samples)?;
        Some(report)
    } else {
        None
    };
    Ok(RunSummary { output_dir: out, log, metrics, final_coverage })
}

/// Options for [`evaluate`].
#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub dataset: DatasetSpec,
    pub samples: usize,
    /// Seed of the run whose evaluation noise should be reused.
    pub seed: u64,
    pub noise_family: NoiseFamily,
    pub min_count: usize,
    pub samples_csv: Option<PathBuf>,
}

/// Loads a generator checkpoint, generates `samples` points from the
/// evaluation noise of `seed`, and reports their coverage.
pub fn evaluate(checkpoint: &Path, opts: &EvalOptions) -> Result<(CoverageReport, Tensor)> {
    if opts.samples == 0 || opts.min_count == 0 {
        return Err(Error::Config("samples and min_count must be positive".into()));
    }
    let ckpt = Checkpoint::load(checkpoint)?;
    let dataset = Dataset::from_spec(&opts.dataset)?;
    if ckpt.spec.output_dim() != dataset.dim() {
        return Err(Error::Config(format!(
            "{} produces {}-d samples but the dataset is {}-d",
            checkpoint.display(),
            ckpt.spec.output_dim(),
            dataset.dim()
        )));
    }
    let gen = Generator::new(ckpt.spec.clone())?;
    let noise = NoiseSpec { dim: ckpt.spec.input_dim(), family: opts.noise_family };
    let z = evaluation_noise(&noise, opts.samples, opts.seed);
    let (report, samples) = coverage(&gen, &ckpt.params, &z, &dataset, opts.min_count)?;
    if let Some(path) = &opts.samples_csv {
        write_samples(path, &samples)?;
    }
    Ok((report, samples))
}

/// Aggregate of one config over the shared seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub name: String,
    pub runs: usize,
    pub modes_mean: f64,
    pub modes_sd: f64,
    pub ratio_mean: f64,
    pub ratio_sd: f64,
    /// Per-seed `(modes_covered, high_quality_ratio)`, in seed order.
    pub per_seed: Vec<(usize, f64)>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trains every named config on every seed under `root/<name>/seed_<s>` and
/// writes `root/compare.csv` with the final coverage mean and sample sd.
pub fn compare(configs: &[(String, RunConfig)], seeds: &[u64], root: &Path) -> Result<Vec<CompareRow>> {
    if configs.len() < 2 || seeds.is_empty() {
        return Err(Error::Config("compare needs at least two configs and one seed".into()));
    }
    let data = &configs[0].1.data;
    if let Some((name, _)) = configs.iter().find(|(_, c)| &c.data != data) {
        return Err(Error::Config(format!("config `{name}` uses a different dataset")));
    }
    let mut names: Vec<String> = Vec::new();
    for (name, _) in configs {
        if names.contains(name) {
            return Err(Error::Config(format!("duplicate config name `{name}`")));
        }
        names.push(name.clone());
    }

    let jobs: Vec<(usize, u64)> = (0..configs.len()).flat_map(|c| seeds.iter().map(move |&s| (c, s))).collect();
    let results: Vec<(usize, f64)> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let (name, base) = &configs[c];
            let mut cfg = base.clone();
            cfg.evolution.seed = seed;
            cfg.run.output_dir = Some(root.join(name).join(format!("seed_{seed}")));
            let summary = run_training(&cfg)?;
            let report = summary
                .final_coverage
                .ok_or_else(|| Error::Config(format!("config `{name}` has zero iterations")))?;
            Ok((report.modes_covered, report.high_quality_ratio))
        })
        .collect::<Result<_>>()?;

    let rows: Vec<CompareRow> = configs
        .iter()
        .enumerate()
        .map(|(c, (name, _))| {
            let per_seed = results[c * seeds.len()..(c + 1) * seeds.len()].to_vec();
            let modes: Vec<f64> = per_seed.iter().map(|r| r.0 as f64).collect();
            let ratios: Vec<f64> = per_seed.iter().map(|r| r.1).collect();
            let (modes_mean, modes_sd) = mean_sd(&modes);
            let (ratio_mean, ratio_sd) = mean_sd(&ratios);
            CompareRow { name: name.clone(), runs: per_seed.len(), modes_mean, modes_sd, ratio_mean, ratio_sd, per_seed }
        })
        .collect();

    std::fs::create_dir_all(root)?;
    let mut text = format!("{COMPARE_SCHEMA}\nconfig,runs,modes_mean,modes_sd,ratio_mean,ratio_sd\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.name, r.runs, r.modes_mean, r.modes_sd, r.ratio_mean, r.ratio_sd
        ));
    }
    std::fs::write(root.join("compare.csv"), text)?;
    Ok(rows)
}
