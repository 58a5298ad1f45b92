use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use cegan::data::{DatasetSpec, NoiseFamily};
use cegan::harness::{self, EvalOptions, RunConfig};
use cegan::metrics::{CoverageReport, DEFAULT_EVAL_SAMPLES, DEFAULT_MIN_COUNT};

#[derive(Parser)]
#[command(name = "cegan", version, about = "Evolutionary GAN training on 2-D Gaussian mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run from a TOML config.
    Train {
        config: PathBuf,
        /// Override a config value, e.g. `--set evolution.mu=2`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Measure mode coverage of a saved generator.
    Eval {
        checkpoint: PathBuf,
        /// ring8, grid25, or a path to a headerless CSV of centers.
        #[arg(long, default_value = "ring8")]
        dataset: String,
        /// Mode width; required for CSV datasets.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(short, default_value_t = DEFAULT_EVAL_SAMPLES)]
        n: usize,
        /// Seed of the run whose evaluation noise to reuse.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Noise::Normal)]
        noise: Noise,
        #[arg(long, default_value_t = DEFAULT_MIN_COUNT)]
        min_count: usize,
        /// Where to write the generated points.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Train several configs over shared seeds and aggregate final coverage.
    Compare {
        #[arg(required = true, num_args = 2..)]
        configs: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Check analytic gradients of every objective against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    Normal,
    Uniform,
}

fn print_report(r: &CoverageReport) {
    println!("modes_covered      {}/{}", r.modes_covered, r.per_mode_counts.len());
    println!("high_quality_ratio {:.4}", r.high_quality_ratio);
    println!("per_mode_counts    {:?}", r.per_mode_counts);
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, mut overrides, output_dir } => {
            if let Some(dir) = output_dir {
                overrides.push(format!("run.output_dir={:?}", dir.display().to_string()));
            }
            let cfg = RunConfig::load(&config, &overrides).with_context(|| format!("loading {}", config.display()))?;
            let summary = harness::run_training(&cfg)?;
            println!("{} generations written to {}", summary.log.len(), summary.output_dir.display());
            if let Some(r) = &summary.final_coverage {
                print_report(r);
            }
        }
        Command::Eval { checkpoint, dataset, sigma, n, seed, noise, min_count, samples } => {
            let mut spec = match DatasetSpec::by_name(&dataset) {
                Some(s) => s,
                None => match sigma {
                    Some(s) => DatasetSpec::custom_csv(&dataset, s),
                    None => bail!("dataset `{dataset}` is not built in; pass --sigma for a CSV of centers"),
                },
            };
            if let Some(s) = sigma {
                spec.sigma_mode = s;
            }
            let opts = EvalOptions {
                dataset: spec,
                samples: n,
                seed,
                noise_family: match noise {
                    Noise::Normal => NoiseFamily::StandardNormal,
                    Noise::Uniform => NoiseFamily::UniformPm1,
                },
                min_count,
                samples_csv: samples,
            };
            let (report, _) = harness::evaluate(&checkpoint, &opts)?;
            print_report(&report);
        }
        Command::Compare { configs, seeds, overrides, output_dir } => {
            let mut named = Vec::new();
            for path in &configs {
                let cfg = RunConfig::load(path, &overrides).with_context(|| format!("loading {}", path.display()))?;
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let mut name = stem.clone();
                let mut k = 1;
                while named.iter().any(|(n, _): &(String, RunConfig)| n == &name) {
                    k += 1;
                    name = format!("{stem}_{k}");
                }
                named.push((name, cfg));
            }
            let root = output_dir.unwrap_or_else(|| harness::output_root().join("compare"));
            let rows = harness::compare(&named, &seeds, &root)?;
            println!("{:<20} {:>4} {:>14} {:>16}", "config", "runs", "modes", "ratio");
            for r in rows {
                println!(
                    "{:<20} {:>4} {:>7.2} ± {:<4.2} {:>8.3} ± {:<5.3}",
                    r.name, r.runs, r.modes_mean, r.modes_sd, r.ratio_mean, r.ratio_sd
                );
            }
            println!("wrote {}", root.join("compare.csv").display());
        }
        Command::Gradcheck { instances, seed } => {
            let results = harness::gradcheck_suite(instances, seed)?;
            let mut ok = true;
            for r in &results {
                println!(
                    "{:<18} {:>3} instances  max error {:.3e}  {}",
                    r.objective,
                    r.instances,
                    r.max_error,
                    if r.passed() { "PASS" } else { "FAIL" }
                );
                ok &= r.passed();
            }
            if !ok {
                bail!("gradient check failed (tolerance {:e})", harness::FD_TOLERANCE);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
