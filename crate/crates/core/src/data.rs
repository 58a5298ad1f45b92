//! Synthetic real-data mixtures and the noise prior.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// 8 modes evenly spaced on a circle of radius `scale`.
    Ring8,
    /// 25 modes on a 5x5 lattice with spacing `scale`, centred on the origin.
    Grid25,
    /// Headerless numeric CSV; each row is a mode center.
    CustomCsv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub sigma_mode: f64,
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl DatasetSpec {
    pub fn ring8() -> Self {
        Self { kind: DatasetKind::Ring8, sigma_mode: 0.02, scale: 2.0, path: None }
    }

    pub fn grid25() -> Self {
        Self { kind: DatasetKind::Grid25, sigma_mode: 0.05, scale: 2.0, path: None }
    }

    pub fn custom_csv(path: impl Into<PathBuf>, sigma_mode: f64) -> Self {
        Self { kind: DatasetKind::CustomCsv, sigma_mode, scale: 1.0, path: Some(path.into()) }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "ring8" => Some(Self::ring8()),
            "grid25" => Some(Self::grid25()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_mode > 0.0 && self.sigma_mode.is_finite()) {
            return Err(Error::Config(format!("sigma_mode must be positive, got {}", self.sigma_mode)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!("scale must be positive, got {}", self.scale)));
        }
        if self.kind == DatasetKind::CustomCsv && self.path.is_none() {
            return Err(Error::Config("custom_csv dataset needs a path".into()));
        }
        Ok(())
    }
}

/// A mixture of isotropic Gaussians around fixed centers.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    centers: Vec<f64>,
    sigma: f64,
}

impl Dataset {
    pub fn from_spec(spec: &DatasetSpec) -> Result<Self> {
        spec.validate()?;
        let (dim, centers) = match spec.kind {
            DatasetKind::Ring8 => {
                let c = (0..8)
                    .flat_map(|k| {
                        let a = 2.0 * std::f64::consts::PI * k as f64 / 8.0;
                        [spec.scale * a.cos(), spec.scale * a.sin()]
                    })
                    .collect();
                (2, c)
            }
            DatasetKind::Grid25 => {
                let c = (0..5)
                    .flat_map(|i| (0..5).flat_map(move |j| [(i as f64 - 2.0) * spec.scale, (j as f64 - 2.0) * spec.scale]))
                    .collect();
                (2, c)
            }
            DatasetKind::CustomCsv => {
                let path = spec.path.as_ref().expect("validated");
                load_csv_points(path, None)?
            }
        };
        Ok(Self { dim, centers, sigma: spec.sigma_mode })
    }

    pub fn from_centers(dim: usize, centers: Vec<f64>, sigma: f64) -> Self {
        assert!(dim > 0 && !centers.is_empty() && centers.len() % dim == 0);
        Self { dim, centers, sigma }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn num_modes(&self) -> usize {
        self.centers.len() / self.dim
    }

    pub fn center(&self, k: usize) -> &[f64] {
        &self.centers[k * self.dim..(k + 1) * self.dim]
    }

    /// Centers as a `[modes, dim]` tensor.
    pub fn centers(&self) -> Tensor {
        Tensor::matrix(self.num_modes(), self.dim, self.centers.clone())
    }

    /// Uniform mode choice, then Gaussian jitter of `sigma` per coordinate.
    pub fn sample(&self, count: usize, rng: &mut impl Rng) -> Tensor {
        let mut data = Vec::with_capacity(count * self.dim);
        for _ in 0..count {
            let k = rng.random_range(0..self.num_modes());
            for &c in self.center(k) {
                let e: f64 = rng.sample(StandardNormal);
                data.push(c + self.sigma * e);
            }
        }
        Tensor::matrix(count, self.dim, data)
    }
}

/// Reads a headerless numeric CSV into `(columns, row-major values)`.
pub fn load_csv_points(path: &Path, expected_dim: Option<usize>) -> Result<(usize, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut dim = expected_dim;
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let cols = record.len();
        match dim {
            Some(d) if d != cols => {
                return Err(Error::Data(format!(
                    "{}: row {} has {cols} columns, expected {d}",
                    path.display(),
                    line + 1
                )))
            }
            None => dim = Some(cols),
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Data(format!("{}: row {}: `{field}` is not a number", path.display(), line + 1))
            })?;
            values.push(v);
        }
    }
    match dim {
        Some(d) if d > 0 && !values.is_empty() => Ok((d, values)),
        _ => Err(Error::Data(format!("{}: no data rows", path.display()))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    StandardNormal,
    UniformPm1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub dim: usize,
    pub family: NoiseFamily,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { dim: 8, family: NoiseFamily::StandardNormal }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("noise dim must be at least 1".into()));
        }
        Ok(())
    }
}

/// `count` i.i.d. rows from the noise prior.
pub fn sample_noise(spec: &NoiseSpec, count: usize, rng: &mut impl Rng) -> Tensor {
    let n = count * spec.dim;
    let data = match spec.family {
        NoiseFamily::StandardNormal => (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        NoiseFamily::UniformPm1 => (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect(),
    };
    Tensor::matrix(count, spec.dim, data)
}

/// Independent random streams derived from one run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Noise = 2,
    Penalty = 3,
    Evaluation = 4,
    Init = 5,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
