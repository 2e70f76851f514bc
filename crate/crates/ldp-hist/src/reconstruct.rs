//! Maximum-likelihood reconstruction of the input histogram from aggregated
//! square-wave reports: plain EM and EM with a binomial smoothing step (EMS).

use crate::core::{BucketSpec, Histogram, PrivacyParams};
use crate::error::{Error, Result};
use crate::wave::TransitionMatrix;

/// Per-output-bucket report counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportHistogram {
    counts: Vec<u64>,
    n: u64,
}

impl ReportHistogram {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidArgument("report histogram needs at least one bucket".into()));
        }
        let n = counts.iter().sum();
        Ok(Self { counts, n })
    }

    /// Buckets continuous reports over the output domain.
    pub fn bucketize(reports: &[f64], spec: &BucketSpec) -> Result<Self> {
        let mut counts = vec![0u64; spec.len()];
        for &r in reports {
            counts[spec.bucket_of(r)?] += 1;
        }
        Self::from_counts(counts)
    }

    /// Counts discrete reports over `d_tilde` output indices.
    pub fn from_indices(reports: &[u32], d_tilde: usize) -> Result<Self> {
        let mut counts = vec![0u64; d_tilde];
        for &r in reports {
            if r as usize >= d_tilde {
                return Err(Error::InvalidData(format!(
                    "report index {r} outside output domain [0, {d_tilde})"
                )));
            }
            counts[r as usize] += 1;
        }
        Self::from_counts(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn n(&self) -> u64 {
        self.n
    }
}

/// Starting point for the iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum InitRule {
    /// `x^0 = (1/d, ..., 1/d)`; lies in the strict interior of the simplex.
    Uniform,
    /// Caller-supplied starting histogram.
    Custom(Vec<f64>),
}

/// Stopping threshold, iteration cap and smoothing switch for `reconstruct`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub tau: f64,
    pub max_iters: usize,
    pub smoothing: bool,
    pub init: InitRule,
}

impl EmConfig {
    /// Plain EM defaults: `tau = 1e-3 * e^eps`.
    pub fn em(privacy: &PrivacyParams) -> Self {
        Self {
            tau: 1e-3 * privacy.exp_eps(),
            max_iters: 10_000,
            smoothing: false,
            init: InitRule::Uniform,
        }
    }

    /// EMS defaults: `tau = 1e-3`, smoothing on.
    pub fn ems() -> Self {
        Self { tau: 1e-3, max_iters: 10_000, smoothing: true, init: InitRule::Uniform }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    fn validate(&self) -> Result<()> {
        if !self.tau.is_finite() || self.tau <= 0.0 {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {}", self.tau)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Convergence report attached to a reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmDiagnostics {
    pub iterations: usize,
    pub log_likelihood: f64,
    /// False when the iteration cap was hit before the likelihood settled.
    pub converged: bool,
}

/// One E+M update. Input and output are on the simplex.
pub fn em_step(
    estimate: &[f64],
    matrix: &TransitionMatrix,
    counts: &ReportHistogram,
) -> Result<Vec<f64>> {
    check_dims(estimate, matrix, counts)?;
    let d = matrix.d();
    let mut weighted = vec![0.0f64; d];
    for (j, &n_j) in counts.counts().iter().enumerate() {
        if n_j == 0 {
            continue;
        }
        let row = matrix.row(j);
        let denom: f64 = row.iter().zip(estimate).map(|(m, x)| m * x).sum();
        if denom <= 0.0 {
            return Err(Error::Degenerate(format!(
                "output bucket {j} has {n_j} reports but zero predicted mass"
            )));
        }
        let scale = n_j as f64 / denom;
        for (w, &m) in weighted.iter_mut().zip(row) {
            *w += scale * m;
        }
    }
    let mut next: Vec<f64> = estimate.iter().zip(&weighted).map(|(x, w)| x * w).collect();
    let total: f64 = next.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("EM update lost all probability mass".into()));
    }
    for x in &mut next {
        *x /= total;
    }
    Ok(next)
}

/// Binomial `(1/4, 1/2, 1/4)` smoothing with clamped edges: the outward
/// quarter weight stays on the edge bucket, so total mass is preserved.
pub fn smooth(estimate: &[f64]) -> Vec<f64> {
    let d = estimate.len();
    if d <= 1 {
        return estimate.to_vec();
    }
    let mut out = vec![0.0; d];
    out[0] = 0.75 * estimate[0] + 0.25 * estimate[1];
    for i in 1..d - 1 {
        out[i] = 0.25 * estimate[i - 1] + 0.5 * estimate[i] + 0.25 * estimate[i + 1];
    }
    out[d - 1] = 0.25 * estimate[d - 2] + 0.75 * estimate[d - 1];
    // guard against floating-point drift
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        for x in &mut out {
            *x /= total;
        }
    }
    out
}

/// Aggregated log-likelihood `sum_j n_j ln(sum_i M[j][i] x_i)`.
pub fn log_likelihood(
    estimate: &[f64],
    matrix: &TransitionMatrix,
    counts: &ReportHistogram,
) -> Result<f64> {
    check_dims(estimate, matrix, counts)?;
    let mut ll = 0.0;
    for (j, &n_j) in counts.counts().iter().enumerate() {
        if n_j == 0 {
            continue;
        }
        let predicted: f64 = matrix.row(j).iter().zip(estimate).map(|(m, x)| m * x).sum();
        if predicted <= 0.0 {
            return Err(Error::Degenerate(format!(
                "output bucket {j} has {n_j} reports but zero predicted mass"
            )));
        }
        ll += n_j as f64 * predicted.ln();
    }
    Ok(ll)
}

/// Iterates EM (with a smoothing step when configured) until the
/// log-likelihood improvement drops below `tau` or the iteration cap.
pub fn reconstruct(
    counts: &ReportHistogram,
    matrix: &TransitionMatrix,
    config: &EmConfig,
) -> Result<(Histogram, EmDiagnostics)> {
    config.validate()?;
    let d = matrix.d();
    let mut estimate = match &config.init {
        InitRule::Uniform => vec![1.0 / d as f64; d],
        InitRule::Custom(start) => {
            if start.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "init vector has {} entries, matrix expects {d}",
                    start.len()
                )));
            }
            let total: f64 = start.iter().sum();
            if total <= 0.0 || start.iter().any(|&x| x < 0.0) {
                return Err(Error::InvalidArgument("init vector must be nonnegative with positive mass".into()));
            }
            start.iter().map(|x| x / total).collect()
        }
    };
    let mut ll = log_likelihood(&estimate, matrix, counts)?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        estimate = em_step(&estimate, matrix, counts)?;
        if config.smoothing {
            estimate = smooth(&estimate);
        }
        iterations += 1;
        let next_ll = log_likelihood(&estimate, matrix, counts)?;
        let delta = (next_ll - ll).abs();
        ll = next_ll;
        if delta < config.tau {
            converged = true;
            break;
        }
    }
    let histogram = Histogram::simplex(estimate)?;
    Ok((histogram, EmDiagnostics { iterations, log_likelihood: ll, converged }))
}

fn check_dims(estimate: &[f64], matrix: &TransitionMatrix, counts: &ReportHistogram) -> Result<()> {
    if estimate.len() != matrix.d() {
        return Err(Error::InvalidArgument(format!(
            "estimate has {} buckets, matrix expects {}",
            estimate.len(),
            matrix.d()
        )));
    }
    if counts.len() != matrix.d_tilde() {
        return Err(Error::InvalidArgument(format!(
            "report histogram has {} buckets, matrix expects {}",
            counts.len(),
            matrix.d_tilde()
        )));
    }
    Ok(())
}
