use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::evolution::{GenerationRecord, Lineage, Operator, PairScore, PhaseTiming};
use crate::metrics::{operator_selection_stats, CoverageReport, SelectionStats};
use crate::{Error, Result};

pub const LOG_SCHEMA: &str = "#schema=cegan-log/1";
pub const METRICS_SCHEMA: &str = "#schema=cegan-metrics/1";
pub const TIMING_SCHEMA: &str = "#schema=cegan-timing/1";
pub const SAMPLES_SCHEMA: &str = "#schema=cegan-samples/1";
pub const COMPARE_SCHEMA: &str = "#schema=cegan-compare/1";

/// Append-only per-generation history of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    records: Vec<GenerationRecord>,
}

impl TrainingLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the next generation's record.
    pub fn push(&mut self, record: GenerationRecord) -> Result<()> {
        let expected = self.records.len() as u64 + 1;
        if record.generation != expected {
            return Err(Error::Data(format!("log expects generation {expected}, got {}", record.generation)));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[GenerationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn selection_stats(&self, window: usize) -> SelectionStats {
        operator_selection_stats(&self.records, window)
    }

    /// Parses a `log.csv` written by [`LogWriter`]. Timings are not part of
    /// the log file and come back as zero.
    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let mut log = Self::new();
        for row in reader.records() {
            let row = row?;
            let field = |i: usize| row.get(i).ok_or_else(|| Error::Data(format!("log row has {} fields", row.len())));
            log.push(GenerationRecord {
                generation: parse_num(field(0)?)?,
                d_loss: parse_num(field(1)?)?,
                offspring: parse_list(field(2)?, parse_offspring)?,
                pairs: parse_list(field(3)?, parse_pair)?,
                selected: parse_list(field(4)?, parse_num)?,
                timing: PhaseTiming::default(),
            })?;
        }
        Ok(log)
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Data(format!("`{s}` is not a number")))
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(item).collect()
}

/// `tag(a)` or `tag(a+b)`.
pub fn parse_lineage(s: &str) -> Result<Lineage> {
    let bad = || Error::Data(format!("bad lineage `{s}`"));
    let (tag, rest) = s.split_once('(').ok_or_else(bad)?;
    let inner = rest.strip_suffix(')').ok_or_else(bad)?;
    let op = Operator::from_tag(tag).ok_or_else(bad)?;
    let parents = match inner.split_once('+') {
        Some((a, b)) => (parse_num(a)?, Some(parse_num(b)?)),
        None => (parse_num(inner)?, None),
    };
    Ok(Lineage { op, parents })
}

fn parse_offspring(s: &str) -> Result<(Lineage, f64)> {
    let (l, f) = s.rsplit_once('=').ok_or_else(|| Error::Data(format!("bad offspring `{s}`")))?;
    Ok((parse_lineage(l)?, parse_num(f)?))
}

fn parse_pair(s: &str) -> Result<PairScore> {
    let bad = || Error::Data(format!("bad pair `{s}`"));
    let (ij, w) = s.split_once('=').ok_or_else(bad)?;
    let (i, j) = ij.split_once('+').ok_or_else(bad)?;
    Ok(PairScore { i: parse_num(i)?, j: parse_num(j)?, w: parse_num(w)? })
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(";")
}

/// CSV file with a schema comment line, flushed after every row.
struct CsvFile {
    inner: csv::Writer<BufWriter<File>>,
}

impl CsvFile {
    fn create(path: &Path, schema: &str, header: &[&str]) -> Result<Self> {
        let mut file = BufWriter::new(File::create(path)?);
        writeln!(file, "{schema}")?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(header)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.inner.write_record(fields)?;
        self.inner.flush()?;
        Ok(())
    }
}

/// Writes `log.csv` (deterministic) and `timing.csv` (wall clock).
pub struct LogWriter {
    log: CsvFile,
    timing: CsvFile,
}

impl LogWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        Ok(Self {
            log: CsvFile::create(
                &dir.join("log.csv"),
                LOG_SCHEMA,
                &["generation", "d_loss", "offspring", "pairs", "selected"],
            )?,
            timing: CsvFile::create(
                &dir.join("timing.csv"),
                TIMING_SCHEMA,
                &["generation", "discriminator_s", "mutation_s", "crossover_s", "selection_s"],
            )?,
        })
    }

    pub fn append(&mut self, rec: &GenerationRecord) -> Result<()> {
        self.log.row(&[
            rec.generation.to_string(),
            rec.d_loss.to_string(),
            join(&rec.offspring, |(l, f)| format!("{l}={f}")),
            join(&rec.pairs, |p| format!("{}+{}={}", p.i, p.j, p.w)),
            join(&rec.selected, |i| i.to_string()),
        ])?;
        let t = &rec.timing;
        self.timing.row(&[
            rec.generation.to_string(),
            t.discriminator.as_secs_f64().to_string(),
            t.mutation.as_secs_f64().to_string(),
            t.crossover.as_secs_f64().to_string(),
            t.selection.as_secs_f64().to_string(),
        ])
    }
}

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub generation: u64,
    pub coverage: CoverageReport,
    /// Selected parents per reported operator since the previous row.
    pub selections: [usize; 4],
}

pub struct MetricsWriter {
    file: CsvFile,
}

impl MetricsWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        let mut header = vec!["generation", "modes_covered", "high_quality_ratio", "per_mode_counts"];
        header.extend(Operator::REPORTED.iter().map(|op| op.tag()));
        Ok(Self { file: CsvFile::create(&dir.join("metrics.csv"), METRICS_SCHEMA, &header)? })
    }

    pub fn append(&mut self, row: &MetricRow) -> Result<()> {
        let mut fields = vec![
            row.generation.to_string(),
            row.coverage.modes_covered.to_string(),
            row.coverage.high_quality_ratio.to_string(),
            join(&row.coverage.per_mode_counts, |c| c.to_string()),
        ];
        fields.extend(row.selections.iter().map(|c| c.to_string()));
        self.file.row(&fields)
    }
}

/// Reads `(generation, modes_covered, high_quality_ratio)` from `metrics.csv`.
pub fn read_metrics(path: &Path) -> Result<Vec<(u64, usize, f64)>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    reader
        .records()
        .map(|row| {
            let row = row?;
            Ok((parse_num(&row[0])?, parse_num(&row[1])?, parse_num(&row[2])?))
        })
        .collect()
}

/// Writes generated points as `x0,x1,...` rows.
pub fn write_samples(path: &Path, samples: &crate::autodiff::Tensor) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "{SAMPLES_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record((0..samples.cols()).map(|c| format!("x{c}")))?;
    for i in 0..samples.rows() {
        w.write_record(samples.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
