//! On-disk formats for the CLI pipeline stages.
//!
//! Values files are one number per line. Histogram and report files start
//! with a single JSON metadata line followed by one record per line, so the
//! stages can be chained without re-specifying mechanism parameters.

use std::fs;
use std::path::Path;

use ldp_hist::core::{Histogram, KeyedHashReport, ReportBatch, RowSignReport};
use ldp_hist::error::{Error, Result};
use serde::{Deserialize, Serialize};

fn read_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::InvalidData(format!("cannot read {}: {e}", path.display()))
}

fn write_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::InvalidData(format!("cannot write {}: {e}", path.display()))
}

pub fn write_values(path: &Path, values: &[f64]) -> Result<()> {
    let mut out = String::with_capacity(values.len() * 12);
    for v in values {
        out.push_str(&format!("{v}\n"));
    }
    fs::write(path, out).map_err(|e| write_error(path, e))
}

pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| read_error(path, e))?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if lineno == 0 => continue, // header
            Err(_) => {
                return Err(Error::InvalidData(format!(
                    "non-numeric row {} in {}: {line:?}",
                    lineno + 1,
                    path.display()
                )))
            }
        }
    }
    if values.is_empty() {
        return Err(Error::InvalidData(format!("no values in {}", path.display())));
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HistogramMeta {
    r#type: String,
    buckets: usize,
    normalized: bool,
}

pub fn write_histogram(path: &Path, hist: &Histogram) -> Result<()> {
    let meta = HistogramMeta {
        r#type: "histogram".into(),
        buckets: hist.len(),
        normalized: hist.is_normalized(),
    };
    let mut out = serde_json::to_string(&meta).expect("meta serializes");
    out.push('\n');
    for v in hist.values() {
        out.push_str(&format!("{v}\n"));
    }
    fs::write(path, out).map_err(|e| write_error(path, e))
}

pub fn read_histogram(path: &Path) -> Result<Histogram> {
    let text = fs::read_to_string(path).map_err(|e| read_error(path, e))?;
    let mut lines = text.lines();
    let meta_line = lines
        .next()
        .ok_or_else(|| Error::InvalidData(format!("{} is empty", path.display())))?;
    let meta: HistogramMeta = serde_json::from_str(meta_line).map_err(|e| {
        Error::InvalidData(format!("{} has no histogram header: {e}", path.display()))
    })?;
    let mut values = Vec::with_capacity(meta.buckets);
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        values.push(line.parse::<f64>().map_err(|_| {
            Error::InvalidData(format!("bad histogram entry in {}: {line:?}", path.display()))
        })?);
    }
    if values.len() != meta.buckets {
        return Err(Error::InvalidData(format!(
            "{} declares {} buckets but has {}",
            path.display(),
            meta.buckets,
            values.len()
        )));
    }
    if meta.normalized {
        Histogram::simplex(values)
    } else {
        Histogram::from_values(values)
    }
}

/// Sniffs whether a file is a histogram file (JSON header) or a values file.
pub fn read_distribution_input(path: &Path, buckets: usize) -> Result<Histogram> {
    let text = fs::read_to_string(path).map_err(|e| read_error(path, e))?;
    let first = text.lines().next().unwrap_or("");
    if first.trim_start().starts_with('{') {
        read_histogram(path)
    } else {
        let values = read_values(path)?;
        let spec = ldp_hist::core::BucketSpec::unit(buckets)?;
        Histogram::bucketize(&values, &spec)?.normalize()
    }
}

/// Metadata line of a reports file; optional fields carry the
/// mechanism-specific parameters needed for estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub r#type: String,
    pub mechanism: String,
    pub epsilon: f64,
    pub n: usize,
    /// Continuous wave half-width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Categorical domain size (bins for grr/olh/hrr, input size for
    /// sw-discrete).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buckets: Option<usize>,
    /// Discrete wave half-width in buckets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_discrete: Option<usize>,
    /// OLH hash range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<usize>,
    /// HRR Hadamard order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
}

impl ReportMeta {
    pub fn new(mechanism: &str, epsilon: f64, n: usize) -> Self {
        Self {
            r#type: "reports".into(),
            mechanism: mechanism.into(),
            epsilon,
            n,
            b: None,
            buckets: None,
            b_discrete: None,
            g: None,
            order: None,
        }
    }
}

pub fn write_reports(path: &Path, meta: &ReportMeta, batch: &ReportBatch) -> Result<()> {
    if meta.n != batch.len() {
        return Err(Error::InvalidArgument(format!(
            "meta declares {} reports, batch has {}",
            meta.n,
            batch.len()
        )));
    }
    let mut out = serde_json::to_string(meta).expect("meta serializes");
    out.push('\n');
    match batch {
        ReportBatch::Values(values) => {
            for v in values {
                out.push_str(&format!("{v}\n"));
            }
        }
        ReportBatch::Indices(indices) => {
            for v in indices {
                out.push_str(&format!("{v}\n"));
            }
        }
        ReportBatch::KeyedHashes(reports) => {
            for r in reports {
                out.push_str(&format!("{} {}\n", r.key, r.value));
            }
        }
        ReportBatch::RowSigns(reports) => {
            for r in reports {
                out.push_str(&format!("{} {}\n", r.row, r.sign));
            }
        }
        ReportBatch::LayeredCfo(_) | ReportBatch::LayeredRowSigns(_) => {
            return Err(Error::InvalidArgument(
                "layered reports have no file format; hierarchy estimators run end-to-end".into(),
            ))
        }
    }
    fs::write(path, out).map_err(|e| write_error(path, e))
}

pub fn read_reports(path: &Path) -> Result<(ReportMeta, ReportBatch)> {
    let text = fs::read_to_string(path).map_err(|e| read_error(path, e))?;
    let mut lines = text.lines();
    let meta_line = lines
        .next()
        .ok_or_else(|| Error::InvalidData(format!("{} is empty", path.display())))?;
    let meta: ReportMeta = serde_json::from_str(meta_line).map_err(|e| {
        Error::InvalidData(format!("{} has no report header: {e}", path.display()))
    })?;
    let body: Vec<&str> = lines.map(str::trim).filter(|l| !l.is_empty()).collect();
    let bad_line = |line: &str| {
        Error::InvalidData(format!("bad report line in {}: {line:?}", path.display()))
    };
    let batch = match meta.mechanism.as_str() {
        "sw" | "sr" | "pm" => ReportBatch::Values(
            body.iter()
                .map(|l| l.parse::<f64>().map_err(|_| bad_line(l)))
                .collect::<Result<_>>()?,
        ),
        "sw-discrete" | "grr" => ReportBatch::Indices(
            body.iter()
                .map(|l| l.parse::<u32>().map_err(|_| bad_line(l)))
                .collect::<Result<_>>()?,
        ),
        "olh" => ReportBatch::KeyedHashes(
            body.iter()
                .map(|l| {
                    let mut parts = l.split_whitespace();
                    let key = parts.next().and_then(|s| s.parse::<u64>().ok());
                    let value = parts.next().and_then(|s| s.parse::<u32>().ok());
                    match (key, value, parts.next()) {
                        (Some(key), Some(value), None) => Ok(KeyedHashReport { key, value }),
                        _ => Err(bad_line(l)),
                    }
                })
                .collect::<Result<_>>()?,
        ),
        "hrr" => ReportBatch::RowSigns(
            body.iter()
                .map(|l| {
                    let mut parts = l.split_whitespace();
                    let row = parts.next().and_then(|s| s.parse::<u32>().ok());
                    let sign = parts.next().and_then(|s| s.parse::<i8>().ok());
                    match (row, sign, parts.next()) {
                        (Some(row), Some(sign), None) if sign == 1 || sign == -1 => {
                            Ok(RowSignReport { row, sign })
                        }
                        _ => Err(bad_line(l)),
                    }
                })
                .collect::<Result<_>>()?,
        ),
        other => {
            return Err(Error::InvalidData(format!(
                "unknown mechanism {other:?} in {}",
                path.display()
            )))
        }
    };
    if batch.len() != meta.n {
        return Err(Error::InvalidData(format!(
            "{} declares {} reports but has {}",
            path.display(),
            meta.n,
            batch.len()
        )));
    }
    Ok((meta, batch))
}
