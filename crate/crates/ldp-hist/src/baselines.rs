//! Mean-oriented baseline mechanisms (stochastic rounding and the piecewise
//! mechanism), the split-population variance protocol built on them, and the
//! CFO-with-binning density pipeline.

use rand::Rng;

use crate::core::{BucketSpec, Histogram, PrivacyParams, RngSeed};
use crate::error::{Error, Result};
use crate::fo::{
    choose_cfo, grr_aggregate, grr_perturb, norm_sub, olh_aggregate, olh_perturb, CfoKind,
    GrrParams, OlhParams,
};

/// Stochastic rounding: report one of the two extremes, debiased by
/// `1 / (p - q)`. Input domain `[-1, 1]`.
pub fn sr_perturb<R: Rng>(v: f64, privacy: &PrivacyParams, rng: &mut R) -> Result<f64> {
    if !(-1.0..=1.0).contains(&v) {
        return Err(Error::InvalidData(format!("SR input {v} outside [-1, 1]")));
    }
    let e = privacy.exp_eps();
    let p = e / (e + 1.0);
    let q = 1.0 - p;
    let pr_plus = q + (p - q) * (1.0 + v) / 2.0;
    let raw = if rng.random::<f64>() < pr_plus { 1.0 } else { -1.0 };
    Ok(raw / (p - q))
}

/// Piecewise mechanism over input `[-1, 1]` and output `[-s, s]` with
/// `s = (e^{eps/2} + 1) / (e^{eps/2} - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmParams {
    s: f64,
    t: f64, // e^{eps/2}
}

impl PmParams {
    pub fn new(privacy: &PrivacyParams) -> Self {
        let t = (privacy.epsilon() / 2.0).exp();
        Self { s: (t + 1.0) / (t - 1.0), t }
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// Left end of the high-probability range for input `v`.
    pub fn ell(&self, v: f64) -> f64 {
        (self.t * v - 1.0) / (self.t - 1.0)
    }

    /// Right end of the high-probability range for input `v`.
    pub fn r(&self, v: f64) -> f64 {
        (self.t * v + 1.0) / (self.t - 1.0)
    }

    /// Probability mass of the high region: `e^{eps/2} / (e^{eps/2} + 1)`.
    pub fn high_mass(&self) -> f64 {
        self.t / (self.t + 1.0)
    }
}

/// Samples the piecewise mechanism: uniform in `[ell(v), r(v)]` with the high
/// mass, otherwise uniform on the two outer segments (picked proportionally
/// to their lengths).
pub fn pm_perturb<R: Rng>(v: f64, params: &PmParams, rng: &mut R) -> Result<f64> {
    if !(-1.0..=1.0).contains(&v) {
        return Err(Error::InvalidData(format!("PM input {v} outside [-1, 1]")));
    }
    let (l, r, s) = (params.ell(v), params.r(v), params.s);
    if rng.random::<f64>() < params.high_mass() {
        return Ok(l + rng.random::<f64>() * (r - l));
    }
    let left_len = l + s;
    let right_len = s - r;
    if rng.random::<f64>() * (left_len + right_len) < left_len {
        Ok(-s + rng.random::<f64>() * left_len)
    } else {
        Ok(r + rng.random::<f64>() * right_len)
    }
}

/// Arithmetic mean of debiased reports.
pub fn mean_estimate(reports: &[f64]) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::InvalidData("mean estimate over an empty batch".into()));
    }
    Ok(reports.iter().sum::<f64>() / reports.len() as f64)
}

/// Which mean-estimation mechanism to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanMechanism {
    Sr,
    Pm,
}

/// Full-population mean estimate for values in `[0, 1]`: affinely mapped to
/// `[-1, 1]`, perturbed, debiased, and mapped back.
pub fn estimate_mean_01(
    values: &[f64],
    mechanism: MeanMechanism,
    privacy: &PrivacyParams,
    seed: RngSeed,
) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidData("mean estimation over an empty batch".into()));
    }
    let pm = PmParams::new(privacy);
    let mut total = 0.0;
    for (i, &v) in values.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidData(format!("value {v} outside [0, 1]")));
        }
        let mapped = 2.0 * v - 1.0;
        let mut rng = seed.user_stream(i as u64);
        total += match mechanism {
            MeanMechanism::Sr => sr_perturb(mapped, privacy, &mut rng)?,
            MeanMechanism::Pm => pm_perturb(mapped, &pm, &mut rng)?,
        };
    }
    Ok((total / values.len() as f64 + 1.0) / 2.0)
}

/// Split-population variance protocol: a random half of the users estimates
/// the mean; the rest report the squared deviation from the broadcast mean.
/// Returns `(mean estimate, variance estimate)`.
pub fn variance_protocol(
    values: &[f64],
    mechanism: MeanMechanism,
    privacy: &PrivacyParams,
    seed: RngSeed,
) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidData(format!("variance protocol needs >= 2 users, got {n}")));
    }
    // seeded shuffle decides the phase split: floor(n/2) mean users
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed.stream(&[0x73706c6974]);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let (mean_users, var_users) = order.split_at(n / 2);

    let mean_values: Vec<f64> = mean_users.iter().map(|&i| values[i]).collect();
    let mean_seed = seed.derive(&[0x6d65616e]);
    // broadcast mean clamped into the data domain so squared deviations stay in [0, 1]
    let mu = estimate_mean_01(&mean_values, mechanism, privacy, mean_seed)?.clamp(0.0, 1.0);

    let deviations: Vec<f64> = var_users.iter().map(|&i| (values[i] - mu).powi(2)).collect();
    let var_seed = seed.derive(&[0x766172]);
    let var = estimate_mean_01(&deviations, mechanism, privacy, var_seed)?;
    Ok((mu, var))
}

/// Bin count for the CFO-with-binning pipeline; `c` must divide the fine
/// granularity `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinningConfig {
    c: usize,
    d: usize,
}

impl BinningConfig {
    pub fn new(c: usize, d: usize) -> Result<Self> {
        if c < 2 {
            return Err(Error::InvalidArgument(format!("bin count must be >= 2, got {c}")));
        }
        if d < c || !d.is_multiple_of(c) {
            return Err(Error::InvalidArgument(format!(
                "bin count {c} must divide the fine granularity {d}"
            )));
        }
        Ok(Self { c, d })
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn d(&self) -> usize {
        self.d
    }
}

/// CFO with binning: coarsen values to `c` bins, run the lower-variance
/// oracle, Norm-Sub the estimate, then spread each bin's mass uniformly over
/// its `d / c` fine buckets.
pub fn cfo_binning_pipeline(
    values: &[f64],
    config: &BinningConfig,
    privacy: &PrivacyParams,
    seed: RngSeed,
) -> Result<Histogram> {
    let spec = BucketSpec::unit(config.c)?;
    let bins: Vec<u32> = values
        .iter()
        .map(|&v| spec.bucket_of(v).map(|b| b as u32))
        .collect::<Result<_>>()?;
    if bins.is_empty() {
        return Err(Error::InvalidData("binning pipeline over an empty batch".into()));
    }
    let estimate = match choose_cfo(config.c, privacy) {
        CfoKind::Grr => {
            let params = GrrParams::new(config.c, privacy)?;
            let reports: Vec<u32> = bins
                .iter()
                .enumerate()
                .map(|(i, &b)| grr_perturb(b, &params, &mut seed.user_stream(i as u64)))
                .collect::<Result<_>>()?;
            grr_aggregate(&reports, &params)?
        }
        CfoKind::Olh => {
            let params = OlhParams::new(privacy)?;
            let reports: Vec<_> = bins
                .iter()
                .enumerate()
                .map(|(i, &b)| olh_perturb(b, &params, &mut seed.user_stream(i as u64)))
                .collect();
            olh_aggregate(&reports, &params, config.c)?
        }
    };
    let coarse = norm_sub(estimate.values())?;
    let per_bin = config.d / config.c;
    let mut fine = Vec::with_capacity(config.d);
    for mass in coarse {
        for _ in 0..per_bin {
            fine.push(mass / per_bin as f64);
        }
    }
    Histogram::simplex(fine)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eps(e: f64) -> PrivacyParams {
        PrivacyParams::new(e).unwrap()
    }

    #[test]
    fn sr_is_symmetric_at_zero() {
        // Pr[+1] = q + (p-q)/2 = 1/2 exactly
        let privacy = eps(1.0);
        let n = 200_000usize;
        let seed = RngSeed(71);
        let mut plus = 0u64;
        for u in 0..n {
            if sr_perturb(0.0, &privacy, &mut seed.user_stream(u as u64)).unwrap() > 0.0 {
                plus += 1;
            }
        }
        let sigma = (0.25 / n as f64).sqrt();
        assert!((plus as f64 / n as f64 - 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn sr_outputs_are_scaled_extremes() {
        let privacy = eps(1.0);
        let e = privacy.exp_eps();
        let scale = 1.0 / ((e - 1.0) / (e + 1.0));
        let mut rng = RngSeed(73).user_stream(0);
        for _ in 0..100 {
            let out = sr_perturb(0.3, &privacy, &mut rng).unwrap();
            assert!((out.abs() - scale).abs() < 1e-12);
        }
        assert!(sr_perturb(1.2, &privacy, &mut rng).is_err());
    }

    #[test]
    fn sr_unbiased_at_0_3() {
        let privacy = eps(1.0);
        let n = 1_000_000usize;
        let seed = RngSeed(79);
        let v = 0.3;
        let mut total = 0.0;
        for u in 0..n {
            total += sr_perturb(v, &privacy, &mut seed.user_stream(u as u64)).unwrap();
        }
        let mean = total / n as f64;
        let e = privacy.exp_eps();
        let scale = (e + 1.0) / (e - 1.0);
        // Var[v~] = scale^2 - v^2
        let sigma = ((scale * scale - v * v) / n as f64).sqrt();
        assert!((mean - v).abs() < 3.0 * sigma, "mean {mean} vs {v}");
    }

    #[test]
    fn sr_and_pm_unbiased_at_reference_inputs() {
        let privacy = eps(1.0);
        let pm = PmParams::new(&privacy);
        let n = 200_000usize;
        let e = privacy.exp_eps();
        let sr_scale = (e + 1.0) / (e - 1.0);
        for (tag, v) in [(0u64, -1.0f64), (1, -0.5), (2, 0.0), (3, 0.5), (4, 1.0)] {
            let seed = RngSeed(173).derive(&[tag]);
            let mut sr_total = 0.0;
            let mut pm_total = 0.0;
            let mut pm_sq = 0.0;
            for u in 0..n {
                sr_total += sr_perturb(v, &privacy, &mut seed.stream(&[0, u as u64])).unwrap();
                let out = pm_perturb(v, &pm, &mut seed.stream(&[1, u as u64])).unwrap();
                pm_total += out;
                pm_sq += out * out;
            }
            let sr_mean = sr_total / n as f64;
            let sr_sigma = ((sr_scale * sr_scale - v * v) / n as f64).sqrt();
            assert!((sr_mean - v).abs() < 3.0 * sr_sigma, "SR at {v}: mean {sr_mean}");
            let pm_mean = pm_total / n as f64;
            let pm_var = pm_sq / n as f64 - pm_mean * pm_mean;
            let pm_sigma = (pm_var / n as f64).sqrt();
            assert!((pm_mean - v).abs() < 3.0 * pm_sigma, "PM at {v}: mean {pm_mean}");
        }
    }

    #[test]
    fn sr_large_eps_approaches_plain_rounding() {
        let privacy = eps(40.0);
        let n = 100_000usize;
        let seed = RngSeed(83);
        let v = 0.3;
        let mut plus = 0u64;
        for u in 0..n {
            if sr_perturb(v, &privacy, &mut seed.user_stream(u as u64)).unwrap() > 0.0 {
                plus += 1;
            }
        }
        let expect = (1.0 + v) / 2.0;
        let sigma = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((plus as f64 / n as f64 - expect).abs() < 3.0 * sigma);
    }

    #[test]
    fn pm_range_identities() {
        let privacy = eps(2.0);
        let params = PmParams::new(&privacy);
        let t = (privacy.epsilon() / 2.0).exp();
        for v in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            let width = params.r(v) - params.ell(v);
            assert!((width - 2.0 / (t - 1.0)).abs() < 1e-12);
            assert!(params.ell(v) >= -params.s() - 1e-12);
            assert!(params.r(v) <= params.s() + 1e-12);
        }
        // at v = -1 the high region is [-s, -1]
        assert!((params.ell(-1.0) + params.s()).abs() < 1e-12);
        assert!((params.r(-1.0) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pm_support_and_high_mass() {
        let privacy = eps(1.0);
        let params = PmParams::new(&privacy);
        let n = 1_000_000usize;
        let seed = RngSeed(89);
        let v = 0.25;
        let mut high = 0u64;
        for u in 0..n {
            let out = pm_perturb(v, &params, &mut seed.user_stream(u as u64)).unwrap();
            assert!(out >= -params.s() && out <= params.s());
            if out >= params.ell(v) && out <= params.r(v) {
                high += 1;
            }
        }
        let expect = params.high_mass();
        let sigma = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((high as f64 / n as f64 - expect).abs() < 3.0 * sigma);
    }

    #[test]
    fn pm_unbiased_at_reference_points() {
        let privacy = eps(1.0);
        let params = PmParams::new(&privacy);
        let n = 1_000_000usize;
        for (tag, v) in [(0u64, -1.0), (1, 0.0), (2, 0.5)] {
            let seed = RngSeed(97).derive(&[tag]);
            let mut total = 0.0;
            let mut sq = 0.0;
            for u in 0..n {
                let out = pm_perturb(v, &params, &mut seed.user_stream(u as u64)).unwrap();
                total += out;
                sq += out * out;
            }
            let mean = total / n as f64;
            let var = sq / n as f64 - mean * mean;
            let sigma = (var / n as f64).sqrt();
            assert!((mean - v).abs() < 3.0 * sigma, "v={v}: mean {mean}");
        }
    }

    #[test]
    fn pm_ldp_ratio_bounded() {
        let privacy = eps(2.0);
        let params = PmParams::new(&privacy);
        let n = 200_000usize;
        let bins = 20usize;
        let width = 2.0 * params.s() / bins as f64;
        let seed = RngSeed(101);
        let mut c1 = vec![0f64; bins];
        let mut c2 = vec![0f64; bins];
        for u in 0..n {
            let o1 = pm_perturb(-1.0, &params, &mut seed.stream(&[0, u as u64])).unwrap();
            let o2 = pm_perturb(1.0, &params, &mut seed.stream(&[1, u as u64])).unwrap();
            c1[(((o1 + params.s()) / width) as usize).min(bins - 1)] += 1.0;
            c2[(((o2 + params.s()) / width) as usize).min(bins - 1)] += 1.0;
        }
        let e = privacy.exp_eps();
        let nf = n as f64;
        for w in 0..bins {
            let (p1, p2) = (c1[w] / nf, c2[w] / nf);
            let slack = 3.0 * (p1 * (1.0 - p1) / nf + e * e * p2 * (1.0 - p2) / nf).sqrt();
            assert!(p1 - e * p2 <= slack, "bin {w}: {p1} vs {p2}");
            assert!(p2 - e * p1 <= slack, "bin {w} (reverse)");
        }
    }

    #[test]
    fn mean_estimate_basics() {
        assert_eq!(mean_estimate(&[0.4]).unwrap(), 0.4);
        assert_eq!(mean_estimate(&[-1.0, 1.0]).unwrap(), 0.0);
        assert!(mean_estimate(&[]).is_err());
    }

    #[test]
    fn full_population_mean_within_3_sigma() {
        let privacy = eps(1.0);
        let n = 1_000_000usize;
        let values = vec![0.2f64; n];
        let mu = estimate_mean_01(&values, MeanMechanism::Sr, &privacy, RngSeed(103)).unwrap();
        let e = privacy.exp_eps();
        let scale = (e + 1.0) / (e - 1.0);
        // debiased reports live in [-scale, scale]; mapping back halves the spread
        let sigma = (scale * scale / n as f64).sqrt() / 2.0;
        assert!((mu - 0.2).abs() < 3.0 * sigma, "mean {mu}");
    }

    #[test]
    fn variance_protocol_split_and_noiseless_limit() {
        let privacy = eps(40.0);
        let values = vec![0.5f64; 1001];
        let (mu, var) = variance_protocol(&values, MeanMechanism::Pm, &privacy, RngSeed(107)).unwrap();
        assert!((mu - 0.5).abs() < 2e-2);
        assert!(var.abs() < 2e-2);
        assert!(variance_protocol(&[0.5], MeanMechanism::Sr, &privacy, RngSeed(1)).is_err());
    }

    #[test]
    fn variance_protocol_recovers_beta_variance() {
        // deterministic "dataset" with a known spread
        let privacy = eps(4.0);
        let n = 100_000usize;
        let values: Vec<f64> = (0..n).map(|i| ((i as f64 + 0.5) / n as f64).powf(0.5)).collect();
        let true_mean = values.iter().sum::<f64>() / n as f64;
        let true_var =
            values.iter().map(|v| (v - true_mean).powi(2)).sum::<f64>() / n as f64;
        let mut ok = 0;
        for rep in 0..20u64 {
            let (_, var) =
                variance_protocol(&values, MeanMechanism::Pm, &privacy, RngSeed(109).derive(&[rep]))
                    .unwrap();
            if (var - true_var).abs() < 0.5 * true_var {
                ok += 1;
            }
        }
        assert!(ok >= 18, "variance within 50% in only {ok}/20 runs");
    }

    #[test]
    fn binning_config_validation() {
        assert!(BinningConfig::new(16, 256).is_ok());
        assert!(BinningConfig::new(16, 250).is_err());
        assert!(BinningConfig::new(1, 256).is_err());
    }

    #[test]
    fn binning_pipeline_point_mass_spreads_uniformly() {
        let privacy = eps(40.0);
        let config = BinningConfig::new(4, 16).unwrap();
        let values = vec![0.1f64; 2000]; // bin 0
        let hist = cfo_binning_pipeline(&values, &config, &privacy, RngSeed(113)).unwrap();
        for k in 0..4 {
            assert!((hist.values()[k] - 0.25).abs() < 1e-6, "bucket {k}");
        }
        for k in 4..16 {
            assert!(hist.values()[k].abs() < 1e-6);
        }
    }

    #[test]
    fn binning_pipeline_output_on_simplex() {
        let privacy = eps(0.5);
        let config = BinningConfig::new(8, 32).unwrap();
        let values: Vec<f64> = (0..5000).map(|i| (i % 100) as f64 / 100.0).collect();
        let hist = cfo_binning_pipeline(&values, &config, &privacy, RngSeed(127)).unwrap();
        assert!(hist.is_normalized());
        assert!((hist.values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(hist.values().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn binning_pipeline_c_equals_d_is_plain_cfo() {
        let privacy = eps(40.0);
        let config = BinningConfig::new(8, 8).unwrap();
        let values: Vec<f64> = (0..4000).map(|i| (i % 8) as f64 / 8.0 + 0.01).collect();
        let hist = cfo_binning_pipeline(&values, &config, &privacy, RngSeed(131)).unwrap();
        for k in 0..8 {
            assert!((hist.values()[k] - 0.125).abs() < 1e-6);
        }
    }
}
