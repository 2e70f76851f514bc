//! Shared domain types: privacy budget, histograms, bucketization and the
//! seeded randomness contract used by every mechanism in this crate.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Tolerance used when validating that a normalized histogram sums to one.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Privacy budget epsilon together with the cached value of `exp(epsilon)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    epsilon: f64,
    exp_eps: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be finite and positive, got {epsilon}"
            )));
        }
        Ok(Self {
            epsilon,
            exp_eps: epsilon.exp(),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `e^epsilon`, computed once at construction.
    pub fn exp_eps(&self) -> f64 {
        self.exp_eps
    }
}

/// A frequency vector over `d` ordered buckets.
///
/// Unnormalized histograms may carry negative entries (debiased frequency
/// estimates routinely go negative); a normalized histogram is a point on the
/// probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    values: Vec<f64>,
    normalized: bool,
}

impl Histogram {
    /// Wraps raw (possibly negative, unnormalized) frequencies.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("histogram needs at least one bucket".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("histogram entry is not finite".into()));
        }
        Ok(Self { values, normalized: false })
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        Self::from_values(counts.iter().map(|&c| c as f64).collect())
    }

    /// Wraps a vector that is already on the probability simplex.
    pub fn simplex(values: Vec<f64>) -> Result<Self> {
        let mut h = Self::from_values(values)?;
        let sum: f64 = h.values.iter().sum();
        if h.values.iter().any(|&v| v < -SIMPLEX_TOL) || (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidData(format!(
                "vector is not on the simplex (sum {sum})"
            )));
        }
        // clip the tiny negatives permitted by the tolerance
        for v in &mut h.values {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        h.normalized = true;
        Ok(h)
    }

    /// Counts of `values` over the buckets of `spec`.
    pub fn bucketize(values: &[f64], spec: &BucketSpec) -> Result<Self> {
        let mut counts = vec![0.0; spec.len()];
        for &v in values {
            counts[spec.bucket_of(v)?] += 1.0;
        }
        Ok(Self { values: counts, normalized: false })
    }

    /// Divides all entries by their sum. Errors if the sum is not positive.
    pub fn normalize(&self) -> Result<Self> {
        let sum: f64 = self.values.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Degenerate(format!(
                "cannot normalize histogram with total mass {sum}"
            )));
        }
        Ok(Self {
            values: self.values.iter().map(|v| v / sum).collect(),
            normalized: true,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }
}

/// Uniform-width bucketization of a closed interval `[lo, hi]`.
///
/// The right edge is closed on the last bucket: `bucket_of(hi) == d - 1`, so
/// the bucket preimages partition `[lo, hi]` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketSpec {
    lo: f64,
    hi: f64,
    d: usize,
}

impl BucketSpec {
    pub fn new(lo: f64, hi: f64, d: usize) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::InvalidArgument(format!(
                "bucket domain must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        if d == 0 {
            return Err(Error::InvalidArgument("bucket count must be at least 1".into()));
        }
        Ok(Self { lo, hi, d })
    }

    /// Buckets over the unit interval `[0, 1]`.
    pub fn unit(d: usize) -> Result<Self> {
        Self::new(0.0, 1.0, d)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.d as f64
    }

    /// Index of the bucket containing `v`, clamped so `hi` lands in the last
    /// bucket. Values outside `[lo, hi]` are a data error.
    pub fn bucket_of(&self, v: f64) -> Result<usize> {
        if !(v >= self.lo && v <= self.hi) {
            return Err(Error::InvalidData(format!(
                "value {v} outside bucket domain [{}, {}]",
                self.lo, self.hi
            )));
        }
        let idx = ((v - self.lo) / self.width()).floor() as usize;
        Ok(idx.min(self.d - 1))
    }

    /// Left edge of bucket `k`.
    pub fn left_edge(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.width()
    }

    /// Midpoint of bucket `k`.
    pub fn midpoint(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.width()
    }
}

/// Master seed for the whole run. Every randomized operation derives its own
/// stream from `(seed, path)`, so replays are bit-identical regardless of
/// evaluation order or parallel schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

/// splitmix64 mixing step; used for stream derivation and layer hashing.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSeed {
    /// Folds a path of stream identifiers into a derived seed.
    pub fn derive(self, path: &[u64]) -> RngSeed {
        let mut state = splitmix64(self.0);
        for &p in path {
            state = splitmix64(state ^ splitmix64(p));
        }
        RngSeed(state)
    }

    /// A dedicated generator for the stream identified by `path`.
    pub fn stream(self, path: &[u64]) -> ChaCha8Rng {
        let derived = self.derive(path).0;
        let mut key = [0u8; 32];
        let mut s = derived;
        for chunk in key.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }

    /// Per-user stream: `stream(&[user])`.
    pub fn user_stream(self, user: u64) -> ChaCha8Rng {
        self.stream(&[user])
    }
}

/// One perturbed report (shape depends on the mechanism).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyedHashReport {
    /// Identity of the per-user hash function.
    pub key: u64,
    /// GRR-perturbed hashed value in `[0, g)`.
    pub value: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowSignReport {
    /// Hadamard row chosen by the user.
    pub row: u32,
    /// Perturbed sign, `+1` or `-1`.
    pub sign: i8,
}

/// Report produced by whichever categorical frequency oracle a hierarchy
/// layer uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CfoReport {
    Grr(u32),
    Olh(KeyedHashReport),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayeredCfoReport {
    /// Hierarchy layer, 1 (leaves) .. h.
    pub layer: u32,
    pub report: CfoReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayeredRowSignReport {
    pub layer: u32,
    pub row: u32,
    pub sign: i8,
}

/// A batch of per-user reports, tagged by payload shape.
#[derive(Debug, Clone, PartialEq)]
pub enum ReportBatch {
    /// Real-valued reports (square wave, SR, PM).
    Values(Vec<f64>),
    /// Categorical index reports (GRR, discrete square wave).
    Indices(Vec<u32>),
    /// Local-hashing reports (OLH).
    KeyedHashes(Vec<KeyedHashReport>),
    /// Hadamard response reports (HRR).
    RowSigns(Vec<RowSignReport>),
    /// Layer-tagged CFO reports (hierarchy histogram).
    LayeredCfo(Vec<LayeredCfoReport>),
    /// Layer-tagged Hadamard reports (HaarHRR).
    LayeredRowSigns(Vec<LayeredRowSignReport>),
}

impl ReportBatch {
    /// Number of users in the batch.
    pub fn len(&self) -> usize {
        match self {
            ReportBatch::Values(v) => v.len(),
            ReportBatch::Indices(v) => v.len(),
            ReportBatch::KeyedHashes(v) => v.len(),
            ReportBatch::RowSigns(v) => v.len(),
            ReportBatch::LayeredCfo(v) => v.len(),
            ReportBatch::LayeredRowSigns(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
