use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DatasetSpec, NoiseSpec};
use crate::evolution::EvolutionConfig;
use crate::metrics::{DEFAULT_EVAL_SAMPLES, DEFAULT_MIN_COUNT};
use crate::nets::MlpSpec;
use crate::{Error, Result};

/// Environment variable naming the default root for run directories.
pub const OUTPUT_ROOT_VAR: &str = "CEGAN_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Generations between coverage rows in `metrics.csv`.
    pub log_every: u64,
    /// Generations between checkpoints; 0 keeps only the first and last.
    pub checkpoint_every: u64,
    /// Points generated for each coverage measurement.
    pub eval_samples: usize,
    pub min_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            log_every: 100,
            checkpoint_every: 1000,
            eval_samples: DEFAULT_EVAL_SAMPLES,
            min_count: DEFAULT_MIN_COUNT,
            output_dir: None,
        }
    }
}

/// Everything one training run needs, as read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub evolution: EvolutionConfig,
    #[serde(default = "DatasetSpec::ring8")]
    pub data: DatasetSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "MlpSpec::default_generator")]
    pub generator: MlpSpec,
    #[serde(default = "MlpSpec::default_discriminator")]
    pub discriminator: MlpSpec,
    #[serde(default)]
    pub run: RunSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            evolution: EvolutionConfig::default(),
            data: DatasetSpec::ring8(),
            noise: NoiseSpec::default(),
            generator: MlpSpec::default_generator(),
            discriminator: MlpSpec::default_discriminator(),
            run: RunSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_table(toml::from_str(text)?)
    }

    /// Reads `path` and applies `key.path=value` overrides before validation.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut table: toml::Table = toml::from_str(&text)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = toml::Value::Table(table).try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(&self.to_toml()?)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.evolution.validate()?;
        self.data.validate()?;
        self.noise.validate()?;
        self.generator.validate()?;
        self.discriminator.validate()?;
        if self.generator.input_dim() != self.noise.dim {
            return Err(Error::Config(format!(
                "generator input {} does not match noise dim {}",
                self.generator.input_dim(),
                self.noise.dim
            )));
        }
        if self.generator.output_dim() != self.discriminator.input_dim() {
            return Err(Error::Config(format!(
                "generator output {} does not match discriminator input {}",
                self.generator.output_dim(),
                self.discriminator.input_dim()
            )));
        }
        if self.run.log_every == 0 || self.run.eval_samples == 0 || self.run.min_count == 0 {
            return Err(Error::Config("log_every, eval_samples and min_count must be positive".into()));
        }
        Ok(())
    }

    /// `run.output_dir`, else `$CEGAN_OUTPUT_DIR/seed_<seed>`, else
    /// `runs/seed_<seed>`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        if let Some(dir) = &self.run.output_dir {
            return dir.clone();
        }
        output_root().join(format!("seed_{}", self.evolution.seed))
    }
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

/// Sets a dotted key such as `evolution.mu=2` in a parsed config table. The
/// value is read as a TOML literal, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for part in path {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
