//! Dataset synthesis and ingestion with the experiment preprocessing rules:
//! filter a raw value range, then map it affinely onto `[0, 1]`.

use std::fs;
use std::path::PathBuf;

use ldp_hist::core::RngSeed;
use ldp_hist::error::{Error, Result};
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

const DATASET_TAG: u64 = 0x0da7_a5e7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DataSource {
    /// Synthetic Beta(alpha, beta) sample of size `n` on `[0, 1]`.
    Beta { alpha: f64, beta: f64, n: usize },
    /// One numeric value per line; a non-numeric first line is treated as a
    /// header.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub source: DataSource,
    /// Values outside `[filter_lo, filter_hi)` are dropped; survivors are
    /// mapped to `[0, 1]` by `(v - lo) / (hi - lo)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_hi: Option<f64>,
    /// Histogram granularity used by the experiments.
    pub buckets: usize,
}

impl DatasetSpec {
    pub fn beta_synthetic(alpha: f64, beta: f64, n: usize) -> Self {
        Self {
            name: format!("beta({alpha},{beta})"),
            source: DataSource::Beta { alpha, beta, n },
            filter_lo: None,
            filter_hi: None,
            buckets: 256,
        }
    }

    /// Income-style ingestion: keep nonnegative values below 2^19.
    pub fn income_csv(path: PathBuf) -> Self {
        Self {
            name: "income".into(),
            source: DataSource::Csv { path },
            filter_lo: Some(0.0),
            filter_hi: Some(524_288.0),
            buckets: 1024,
        }
    }

    /// Retirement-style ingestion: keep nonnegative values below 60 000.
    pub fn retirement_csv(path: PathBuf) -> Self {
        Self {
            name: "retirement".into(),
            source: DataSource::Csv { path },
            filter_lo: Some(0.0),
            filter_hi: Some(60_000.0),
            buckets: 1024,
        }
    }

    /// Taxi-pickup-style ingestion: seconds in a day mapped by 1/86400.
    pub fn taxi_csv(path: PathBuf) -> Self {
        Self {
            name: "taxi".into(),
            source: DataSource::Csv { path },
            filter_lo: Some(0.0),
            filter_hi: Some(86_400.0),
            buckets: 1024,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.buckets == 0 {
            return Err(Error::InvalidArgument("dataset bucket count must be >= 1".into()));
        }
        match (self.filter_lo, self.filter_hi) {
            (Some(lo), Some(hi)) if lo >= hi => Err(Error::InvalidArgument(format!(
                "dataset filter range [{lo}, {hi}) is empty"
            ))),
            (Some(_), None) | (None, Some(_)) => Err(Error::InvalidArgument(
                "filter_lo and filter_hi must be given together".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Loads the dataset as values in `[0, 1]`, applying the filter/map rule.
pub fn load_dataset(spec: &DatasetSpec, seed: RngSeed) -> Result<Vec<f64>> {
    spec.validate()?;
    let raw = match &spec.source {
        DataSource::Beta { alpha, beta, n } => {
            if *n == 0 {
                return Err(Error::InvalidArgument("synthetic sample size must be >= 1".into()));
            }
            let dist = Beta::new(*alpha, *beta).map_err(|e| {
                Error::InvalidArgument(format!("invalid beta parameters ({alpha}, {beta}): {e}"))
            })?;
            let mut rng = seed.stream(&[DATASET_TAG]);
            (0..*n).map(|_| f64::clamp(dist.sample(&mut rng), 0.0, 1.0)).collect()
        }
        DataSource::Csv { path } => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::InvalidData(format!("cannot read dataset {}: {e}", path.display()))
            })?;
            let mut values = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                match line.parse::<f64>() {
                    Ok(v) => values.push(v),
                    // a non-numeric first line is a header
                    Err(_) if lineno == 0 => continue,
                    Err(_) => {
                        return Err(Error::InvalidData(format!(
                            "non-numeric row {} in {}: {line:?}",
                            lineno + 1,
                            path.display()
                        )))
                    }
                }
            }
            values
        }
    };
    let mapped: Vec<f64> = match (spec.filter_lo, spec.filter_hi) {
        (Some(lo), Some(hi)) => raw
            .into_iter()
            .filter(|&v| v >= lo && v < hi)
            .map(|v| (v - lo) / (hi - lo))
            .collect(),
        _ => {
            for &v in &raw {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidData(format!(
                        "value {v} outside [0, 1]; supply a filter range to rescale"
                    )));
                }
            }
            raw
        }
    };
    if mapped.is_empty() {
        return Err(Error::InvalidData("dataset is empty after filtering".into()));
    }
    Ok(mapped)
}

/// Deterministic subsample of at most `target` values (seeded partial
/// Fisher-Yates over the index set).
pub fn subsample(values: &[f64], target: usize, seed: RngSeed) -> Vec<f64> {
    use rand::Rng;
    if values.len() <= target {
        return values.to_vec();
    }
    let mut indices: Vec<usize> = (0..values.len()).collect();
    let mut rng = seed.stream(&[0x5b5a_3b1e]);
    for i in 0..target {
        let j = rng.random_range(i..indices.len());
        indices.swap(i, j);
    }
    indices[..target].iter().map(|&i| values[i]).collect()
}
