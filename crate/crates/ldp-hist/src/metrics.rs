//! Utility metrics over (true, estimated) histogram pairs: Wasserstein and
//! Kolmogorov-Smirnov distance, random range queries, and errors of mean,
//! variance and quantiles. Histograms live on the unit domain `[0, 1]`.

use rand::Rng;

use crate::core::{Histogram, RngSeed};
use crate::error::{Error, Result};

/// Cumulative sums `P(x, v) = sum_{i <= v} x_i`.
pub fn cdf(h: &Histogram) -> Vec<f64> {
    let mut acc = 0.0;
    h.values()
        .iter()
        .map(|&x| {
            acc += x;
            acc
        })
        .collect()
}

fn check_pair(x: &Histogram, xhat: &Histogram, normalized: bool) -> Result<()> {
    if x.len() != xhat.len() {
        return Err(Error::InvalidArgument(format!(
            "histogram lengths differ: {} vs {}",
            x.len(),
            xhat.len()
        )));
    }
    if normalized && !(x.is_normalized() && xhat.is_normalized()) {
        return Err(Error::InvalidArgument("metric requires normalized histograms".into()));
    }
    Ok(())
}

/// One-dimensional Wasserstein distance: the L1 difference between the two
/// CDFs, scaled by the bucket width so the result is in domain units.
pub fn wasserstein(x: &Histogram, xhat: &Histogram) -> Result<f64> {
    check_pair(x, xhat, true)?;
    let (px, py) = (cdf(x), cdf(xhat));
    let sum: f64 = px.iter().zip(&py).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / x.len() as f64)
}

/// Kolmogorov-Smirnov distance: maximum absolute CDF difference.
pub fn ks_distance(x: &Histogram, xhat: &Histogram) -> Result<f64> {
    check_pair(x, xhat, true)?;
    let (px, py) = (cdf(x), cdf(xhat));
    Ok(px
        .iter()
        .zip(&py)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Mean absolute error of random range queries `R(x, i, alpha)` with the left
/// endpoint uniform in `[0, 1 - alpha]` and endpoints snapped to bucket
/// boundaries. Operates on raw cumulative sums, so hierarchy estimates with
/// negative entries are admissible.
pub fn range_query_mae(
    x: &Histogram,
    xhat: &Histogram,
    alpha: f64,
    trials: usize,
    seed: RngSeed,
) -> Result<f64> {
    check_pair(x, xhat, false)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("range width must be in (0, 1), got {alpha}")));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("range query needs at least one trial".into()));
    }
    let d = x.len();
    let (px, py) = (cdf(x), cdf(xhat));
    // CDF at bucket boundary k (mass strictly below boundary k)
    let at = |p: &[f64], k: usize| if k == 0 { 0.0 } else { p[k - 1] };
    let mut rng = seed.stream(&[0x72616e6765]);
    let mut total = 0.0;
    for _ in 0..trials {
        let i = rng.random::<f64>() * (1.0 - alpha);
        let k1 = ((i * d as f64).round() as usize).min(d);
        let k2 = (((i + alpha) * d as f64).round() as usize).min(d);
        let truth = at(&px, k2) - at(&px, k1);
        let est = at(&py, k2) - at(&py, k1);
        total += (truth - est).abs();
    }
    Ok(total / trials as f64)
}

/// Mean of the distribution placing mass `x_k` at bucket midpoints.
pub fn mean_of(x: &Histogram) -> f64 {
    let d = x.len() as f64;
    x.values()
        .iter()
        .enumerate()
        .map(|(k, &m)| m * (k as f64 + 0.5) / d)
        .sum()
}

/// Variance of the bucket-midpoint distribution.
pub fn variance_of(x: &Histogram) -> f64 {
    let d = x.len() as f64;
    let mu = mean_of(x);
    x.values()
        .iter()
        .enumerate()
        .map(|(k, &m)| m * ((k as f64 + 0.5) / d - mu).powi(2))
        .sum()
}

/// `Q(x, beta)`: midpoint of the largest bucket whose CDF is at most `beta`,
/// falling back to bucket 0 when the CDF jumps above `beta` immediately.
pub fn quantile(x: &Histogram, beta: f64) -> f64 {
    let p = cdf(x);
    let d = x.len() as f64;
    let mut best = 0usize;
    for (k, &c) in p.iter().enumerate() {
        // tolerance so accumulated rounding cannot flip the <= comparison
        if c <= beta + 1e-12 {
            best = k;
        } else {
            break;
        }
    }
    (best as f64 + 0.5) / d
}

/// Mean absolute quantile error over the deciles 10% .. 90%.
pub fn quantiles_mae(x: &Histogram, xhat: &Histogram) -> Result<f64> {
    check_pair(x, xhat, true)?;
    let betas: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let total: f64 = betas
        .iter()
        .map(|&b| (quantile(x, b) - quantile(xhat, b)).abs())
        .sum();
    Ok(total / betas.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(values: &[f64]) -> Histogram {
        Histogram::simplex(values.to_vec()).unwrap()
    }

    #[test]
    fn wasserstein_motivating_example() {
        // shifting the 0.7 spike by one bucket vs by three buckets
        let x = hist(&[0.7, 0.1, 0.1, 0.1]);
        let near = hist(&[0.1, 0.7, 0.1, 0.1]);
        let far = hist(&[0.1, 0.1, 0.1, 0.7]);
        let w_near = wasserstein(&x, &near).unwrap();
        let w_far = wasserstein(&x, &far).unwrap();
        // 0.6 and 1.8 in bucket units; domain units divide by d = 4
        assert!((w_near - 0.15).abs() < 1e-12);
        assert!((w_far - 0.45).abs() < 1e-12);
        assert!(w_far > w_near);
        assert_eq!(wasserstein(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn ks_examples() {
        let x = hist(&[0.7, 0.1, 0.1, 0.1]);
        let far = hist(&[0.1, 0.1, 0.1, 0.7]);
        assert!((ks_distance(&x, &far).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(ks_distance(&x, &x).unwrap(), 0.0);
        // KS is at most W1 in bucket units
        let w_buckets = wasserstein(&x, &far).unwrap() * 4.0;
        assert!(ks_distance(&x, &far).unwrap() <= w_buckets + 1e-12);
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        use rand::Rng;
        let seed = RngSeed(61);
        for t in 0..100u64 {
            let mut rng = seed.user_stream(t);
            let d = rng.random_range(2..12usize);
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
                let raw: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                let s: f64 = raw.iter().sum();
                Histogram::simplex(raw.into_iter().map(|v| v / s).collect()).unwrap()
            };
            let (a, b, c) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            for metric in [wasserstein, ks_distance] {
                let ab = metric(&a, &b).unwrap();
                let ba = metric(&b, &a).unwrap();
                assert!((ab - ba).abs() < 1e-12);
                assert!(metric(&a, &a).unwrap() < 1e-12);
                let ac = metric(&a, &c).unwrap();
                let cb = metric(&c, &b).unwrap();
                assert!(ab <= ac + cb + 1e-12, "triangle inequality violated");
            }
        }
    }

    #[test]
    fn range_query_identical_histograms() {
        let x = hist(&[0.2, 0.3, 0.1, 0.4]);
        for alpha in [0.1, 0.4] {
            assert_eq!(range_query_mae(&x, &x, alpha, 100, RngSeed(1)).unwrap(), 0.0);
        }
    }

    #[test]
    fn range_query_matches_enumeration_oracle() {
        // d = 2, alpha = 0.5: boundaries snap to {0, 1, 2}, so the query is
        // either [0, 0.5) or [0.5, 1); enumerate both by hand
        let x = hist(&[1.0, 0.0]);
        let y = hist(&[0.5, 0.5]);
        // i in [0, 0.5): k1 = round(2i) in {0, 1}, k2 = k1 + 1
        // k1 = 0: |1.0 - 0.5| = 0.5 ; k1 = 1: |0.0 - 0.5| = 0.5
        let mae = range_query_mae(&x, &y, 0.5, 20_000, RngSeed(3)).unwrap();
        assert!((mae - 0.5).abs() < 1e-12);
    }

    #[test]
    fn range_query_decreases_along_mixture_path() {
        let x = hist(&[0.6, 0.2, 0.1, 0.1]);
        let y = hist(&[0.1, 0.2, 0.3, 0.4]);
        let mut prev = f64::INFINITY;
        for k in 0..=4 {
            let t = k as f64 / 4.0;
            let mixed: Vec<f64> = x
                .values()
                .iter()
                .zip(y.values())
                .map(|(a, b)| t * a + (1.0 - t) * b)
                .collect();
            let m = Histogram::simplex(mixed).unwrap();
            let mae = range_query_mae(&x, &m, 0.25, 4000, RngSeed(5)).unwrap();
            assert!(mae <= prev + 1e-12);
            prev = mae;
        }
    }

    #[test]
    fn mean_and_variance_examples() {
        let u2 = hist(&[0.5, 0.5]);
        assert!((mean_of(&u2) - 0.5).abs() < 1e-12);
        let point = hist(&[1.0, 0.0, 0.0, 0.0]);
        assert!((mean_of(&point) - 0.125).abs() < 1e-12);
        assert!(variance_of(&point).abs() < 1e-15);
    }

    #[test]
    fn mean_and_variance_match_sampling_oracle() {
        use rand::Rng;
        let x = hist(&[0.1, 0.2, 0.4, 0.2, 0.1]);
        let n = 1_000_000usize;
        let mut rng = RngSeed(67).user_stream(0);
        let cdf_x = cdf(&x);
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let u = rng.random::<f64>();
            let k = cdf_x.iter().position(|&c| u <= c).unwrap_or(x.len() - 1);
            samples.push((k as f64 + 0.5) / x.len() as f64);
        }
        let mean: f64 = samples.iter().sum::<f64>() / n as f64;
        let var: f64 = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64;
        let sigma_mean = (variance_of(&x) / n as f64).sqrt();
        assert!((mean - mean_of(&x)).abs() < 3.0 * sigma_mean);
        assert!((var - variance_of(&x)).abs() < 0.01 * variance_of(&x).max(1e-6));
    }

    #[test]
    fn quantile_conventions() {
        // uniform over 10 buckets: Q(0.3) is bucket 2 (CDF 0.3 <= 0.3)
        let u = hist(&[0.1; 10]);
        assert!((quantile(&u, 0.3) - 0.25).abs() < 1e-12);
        // point mass at bucket 0: CDF jumps to 1, the guard returns bucket 0
        let point = hist(&[1.0, 0.0, 0.0, 0.0]);
        assert!((quantile(&point, 0.5) - 0.125).abs() < 1e-12);
        assert_eq!(quantiles_mae(&u, &u).unwrap(), 0.0);
    }
}
