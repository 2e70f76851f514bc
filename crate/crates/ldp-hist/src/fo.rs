//! Categorical frequency oracles: generalized randomized response (GRR),
//! optimized local hashing (OLH) and Hadamard randomized response (HRR),
//! with unbiased aggregation and Norm-Sub post-processing.

use rand::Rng;

use crate::core::{Histogram, KeyedHashReport, PrivacyParams, RngSeed, RowSignReport};
use crate::error::{Error, Result};

/// GRR over a domain of size `d`: report the true value with probability `p`,
/// any other fixed value with probability `q = (1 - p) / (d - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrrParams {
    d: usize,
    p: f64,
    q: f64,
}

impl GrrParams {
    pub fn new(d: usize, privacy: &PrivacyParams) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidArgument(format!("GRR domain size must be >= 2, got {d}")));
        }
        let e = privacy.exp_eps();
        let p = e / (e + d as f64 - 1.0);
        let q = (1.0 - p) / (d as f64 - 1.0);
        Ok(Self { d, p, q })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }
}

pub fn grr_perturb<R: Rng>(v: u32, params: &GrrParams, rng: &mut R) -> Result<u32> {
    let d = params.d as u32;
    if v >= d {
        return Err(Error::InvalidData(format!("value {v} outside GRR domain [0, {d})")));
    }
    if rng.random::<f64>() < params.p {
        return Ok(v);
    }
    // uniform over the d-1 other values, by index shift
    let r = rng.random_range(0..d - 1);
    Ok(if r < v { r } else { r + 1 })
}

/// Perturbs a whole batch, one derived stream per user.
pub fn grr_perturb_batch(values: &[u32], params: &GrrParams, seed: RngSeed) -> Result<Vec<u32>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| grr_perturb(v, params, &mut seed.user_stream(i as u64)))
        .collect()
}

/// Debiased frequency estimates `x~_v = ((C(v)/n) - q) / (p - q)`.
///
/// The result is unbiased but may carry negative entries.
pub fn grr_aggregate(reports: &[u32], params: &GrrParams) -> Result<Histogram> {
    if reports.is_empty() {
        return Err(Error::InvalidData("GRR aggregation over an empty batch".into()));
    }
    let n = reports.len() as f64;
    let mut counts = vec![0.0f64; params.d];
    for &r in reports {
        if r as usize >= params.d {
            return Err(Error::InvalidData(format!(
                "report {r} outside GRR domain [0, {})",
                params.d
            )));
        }
        counts[r as usize] += 1.0;
    }
    let denom = params.p - params.q;
    let est = counts.into_iter().map(|c| (c / n - params.q) / denom).collect();
    Histogram::from_values(est)
}

/// Per-bucket variance of the GRR estimate: `(d - 2 + e^eps) / ((e^eps - 1)^2 n)`.
pub fn grr_variance(params: &GrrParams, privacy: &PrivacyParams, n: usize) -> f64 {
    let e = privacy.exp_eps();
    (params.d as f64 - 2.0 + e) / ((e - 1.0).powi(2) * n as f64)
}

/// OLH with hash range `g` and inner GRR probability `p = e^eps / (e^eps + g - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlhParams {
    g: usize,
    p: f64,
}

impl OlhParams {
    /// The variance-optimal hash range `g = e^eps + 1`, rounded to an integer
    /// (and never below 2).
    pub fn new(privacy: &PrivacyParams) -> Result<Self> {
        let g = (privacy.exp_eps() + 1.0).round().max(2.0);
        if g > (1u64 << 20) as f64 {
            return Err(Error::InvalidArgument(format!(
                "epsilon {} too large for OLH (hash range {g})",
                privacy.epsilon()
            )));
        }
        Self::with_g(g as usize, privacy)
    }

    pub fn with_g(g: usize, privacy: &PrivacyParams) -> Result<Self> {
        if g < 2 {
            return Err(Error::InvalidArgument(format!("OLH hash range must be >= 2, got {g}")));
        }
        let e = privacy.exp_eps();
        Ok(Self { g, p: e / (e + g as f64 - 1.0) })
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// The keyed hash family: `key` identifies the hash function, values map into `[0, g)`.
pub fn olh_hash(key: u64, v: u32, g: usize) -> u32 {
    let mixed = crate::core::splitmix64(key ^ (v as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    (mixed % g as u64) as u32
}

/// Reports `(H, GRR(H(v)))` with a hash function drawn fresh for the user.
pub fn olh_perturb<R: Rng>(v: u32, params: &OlhParams, rng: &mut R) -> KeyedHashReport {
    let key = rng.random::<u64>();
    let hashed = olh_hash(key, v, params.g);
    let g = params.g as u32;
    let value = if rng.random::<f64>() < params.p {
        hashed
    } else {
        let r = rng.random_range(0..g - 1);
        if r < hashed {
            r
        } else {
            r + 1
        }
    };
    KeyedHashReport { key, value }
}

pub fn olh_perturb_batch(values: &[u32], params: &OlhParams, seed: RngSeed) -> Vec<KeyedHashReport> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| olh_perturb(v, params, &mut seed.user_stream(i as u64)))
        .collect()
}

/// Debiased frequency estimates from OLH reports:
/// `x~_v = ((C(v)/n) - 1/g) / (p - 1/g)` with `C(v) = |{j : H^j(v) = y^j}|`.
pub fn olh_aggregate(reports: &[KeyedHashReport], params: &OlhParams, d: usize) -> Result<Histogram> {
    if reports.is_empty() {
        return Err(Error::InvalidData("OLH aggregation over an empty batch".into()));
    }
    let n = reports.len() as f64;
    let over_g = 1.0 / params.g as f64;
    let denom = params.p - over_g;
    let mut est = vec![0.0f64; d];
    for (v, e) in est.iter_mut().enumerate() {
        let mut support = 0u64;
        for r in reports {
            if olh_hash(r.key, v as u32, params.g) == r.value {
                support += 1;
            }
        }
        *e = (support as f64 / n - over_g) / denom;
    }
    Histogram::from_values(est)
}

/// Approximate per-bucket variance of the OLH estimate: `4 e^eps / ((e^eps - 1)^2 n)`.
pub fn olh_variance(privacy: &PrivacyParams, n: usize) -> f64 {
    let e = privacy.exp_eps();
    4.0 * e / ((e - 1.0).powi(2) * n as f64)
}

/// Which categorical frequency oracle has the lower estimation variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfoKind {
    Grr,
    Olh,
}

/// GRR wins exactly when `d - 2 < 3 e^eps`; otherwise OLH.
pub fn choose_cfo(d: usize, privacy: &PrivacyParams) -> CfoKind {
    if (d as f64) - 2.0 < 3.0 * privacy.exp_eps() {
        CfoKind::Grr
    } else {
        CfoKind::Olh
    }
}

/// Hadamard randomized response: local hashing with `g = 2` where the hash
/// family is the rows of a Sylvester Hadamard matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HrrParams {
    order: usize,
}

impl HrrParams {
    /// Smallest power-of-two order covering `domain_size` (values beyond the
    /// domain are implicitly zero-frequency padding).
    pub fn new(domain_size: usize) -> Result<Self> {
        if domain_size == 0 {
            return Err(Error::InvalidArgument("HRR domain size must be >= 1".into()));
        }
        Ok(Self { order: domain_size.next_power_of_two() })
    }

    /// An exact power-of-two order.
    pub fn with_order(order: usize) -> Result<Self> {
        if order == 0 || !order.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "Hadamard order must be a power of two, got {order}"
            )));
        }
        Ok(Self { order })
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

/// Sylvester Hadamard entry: `(-1)^popcount(row & col)`.
pub fn hadamard_sign(row: u32, col: u32) -> i8 {
    if (row & col).count_ones().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// Picks a row uniformly and reports the (possibly flipped) Hadamard entry at
/// the user's value: the sign equals `phi[row][v]` with probability
/// `e^eps / (e^eps + 1)`.
pub fn hrr_perturb<R: Rng>(
    v: u32,
    params: &HrrParams,
    privacy: &PrivacyParams,
    rng: &mut R,
) -> Result<RowSignReport> {
    if v as usize >= params.order {
        return Err(Error::InvalidData(format!(
            "value {v} outside Hadamard order {}",
            params.order
        )));
    }
    let row = rng.random_range(0..params.order as u32);
    let keep_p = privacy.exp_eps() / (privacy.exp_eps() + 1.0);
    let mut sign = hadamard_sign(row, v);
    if rng.random::<f64>() >= keep_p {
        sign = -sign;
    }
    Ok(RowSignReport { row, sign })
}

pub fn hrr_perturb_batch(
    values: &[u32],
    params: &HrrParams,
    privacy: &PrivacyParams,
    seed: RngSeed,
) -> Result<Vec<RowSignReport>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| hrr_perturb(v, params, privacy, &mut seed.user_stream(i as u64)))
        .collect()
}

/// Debiased estimate of the mean one-hot vector from HRR reports:
/// `x^_a = mean_j(y_j * phi[row_j][a]) / (2p - 1)`.
pub fn hrr_estimate(
    reports: &[RowSignReport],
    params: &HrrParams,
    privacy: &PrivacyParams,
) -> Result<Vec<f64>> {
    if reports.is_empty() {
        return Err(Error::InvalidData("HRR aggregation over an empty batch".into()));
    }
    let p = privacy.exp_eps() / (privacy.exp_eps() + 1.0);
    let scale = 1.0 / (reports.len() as f64 * (2.0 * p - 1.0));
    let mut acc = vec![0.0f64; params.order];
    for r in reports {
        for (a, slot) in acc.iter_mut().enumerate() {
            *slot += r.sign as f64 * hadamard_sign(r.row, a as u32) as f64;
        }
    }
    for slot in &mut acc {
        *slot *= scale;
    }
    Ok(acc)
}

/// Norm-Sub: clamp negatives to zero and subtract a uniform constant from the
/// positive entries so the total is one; repeat until a fixed point.
///
/// Converges in at most `d` rounds since each round removes at least one
/// entry from the positive set.
pub fn norm_sub(estimates: &[f64]) -> Result<Vec<f64>> {
    if !estimates.iter().any(|&v| v > 0.0) {
        return Err(Error::InvalidData("norm-sub needs at least one positive entry".into()));
    }
    let mut out: Vec<f64> = estimates.iter().map(|&v| v.max(0.0)).collect();
    let mut active: Vec<usize> = out
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, _)| i)
        .collect();
    loop {
        let total: f64 = active.iter().map(|&i| out[i]).sum();
        let delta = (total - 1.0) / active.len() as f64;
        let mut clipped = false;
        for &i in &active {
            out[i] -= delta;
            if out[i] < 0.0 {
                out[i] = 0.0;
                clipped = true;
            }
        }
        if !clipped {
            break;
        }
        active.retain(|&i| out[i] > 0.0);
        if active.is_empty() {
            // cannot happen: the largest entry survives every round
            return Err(Error::Degenerate("norm-sub emptied the positive set".into()));
        }
    }
    Ok(out)
}
