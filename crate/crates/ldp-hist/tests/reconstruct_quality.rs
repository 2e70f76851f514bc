//! End-to-end reconstruction quality on a synthetic Beta(5, 2) population:
//! smoothing should improve the Wasserstein error of the plain EM estimate.

use ldp_hist::core::{BucketSpec, Histogram, PrivacyParams, RngSeed};
use ldp_hist::metrics::wasserstein;
use ldp_hist::reconstruct::{reconstruct, EmConfig, ReportHistogram};
use ldp_hist::wave::{build_transition_matrix, sw_perturb, SwParams};
use rand::Rng;
use rand_distr::{Beta, Distribution};

fn beta_sample(n: usize, seed: RngSeed) -> Vec<f64> {
    let beta = Beta::new(5.0, 2.0).unwrap();
    let mut rng = seed.stream(&[0xbe7a]);
    (0..n).map(|_| f64::clamp(beta.sample(&mut rng), 0.0, 1.0)).collect()
}

#[test]
fn ems_beats_em_on_beta_distribution() {
    let privacy = PrivacyParams::new(1.0).unwrap();
    let params = SwParams::optimal(&privacy);
    let d = 256usize;
    let n = 100_000usize;
    let matrix = build_transition_matrix(&params, d, d);
    let (out_lo, out_hi) = params.output_range();
    let out_spec = BucketSpec::new(out_lo, out_hi, d).unwrap();
    let in_spec = BucketSpec::unit(d).unwrap();

    let mut em_total = 0.0;
    let mut ems_total = 0.0;
    let seeds = 20u64;
    for rep in 0..seeds {
        let seed = RngSeed(0xbeb).derive(&[rep]);
        let values = beta_sample(n, seed);
        let truth = Histogram::bucketize(&values, &in_spec).unwrap().normalize().unwrap();
        let reports: Vec<f64> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| sw_perturb(v, &params, &mut seed.user_stream(i as u64)).unwrap())
            .collect();
        let counts = ReportHistogram::bucketize(&reports, &out_spec).unwrap();
        let (em_hist, _) = reconstruct(&counts, &matrix, &EmConfig::em(&privacy)).unwrap();
        let (ems_hist, _) = reconstruct(&counts, &matrix, &EmConfig::ems()).unwrap();
        em_total += wasserstein(&truth, &em_hist).unwrap();
        ems_total += wasserstein(&truth, &ems_hist).unwrap();
    }
    let (em_mean, ems_mean) = (em_total / seeds as f64, ems_total / seeds as f64);
    assert!(
        ems_mean < em_mean,
        "EMS W1 {ems_mean} not below EM W1 {em_mean} over {seeds} seeds"
    );
}

#[test]
fn sampled_beta_population_has_expected_moments() {
    // guard on the test fixture itself: mean of Beta(5, 2) is 5/7
    let n = 100_000usize;
    let values = beta_sample(n, RngSeed(7));
    assert!(values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    let mean = values.iter().sum::<f64>() / n as f64;
    // var of Beta(5,2) = 10 / (49 * 8)
    let sigma = (10.0 / 392.0 / n as f64).sqrt();
    assert!((mean - 5.0 / 7.0).abs() < 3.0 * sigma, "sample mean {mean}");
}

#[test]
fn reconstruction_is_deterministic() {
    let privacy = PrivacyParams::new(0.5).unwrap();
    let params = SwParams::optimal(&privacy);
    let d = 64usize;
    let matrix = build_transition_matrix(&params, d, d);
    let seed = RngSeed(11);
    let mut rng = seed.stream(&[1]);
    let counts = ReportHistogram::from_counts(
        (0..d).map(|_| rng.random_range(0..500u64)).collect(),
    )
    .unwrap();
    let (a, da) = reconstruct(&counts, &matrix, &EmConfig::ems()).unwrap();
    let (b, db) = reconstruct(&counts, &matrix, &EmConfig::ems()).unwrap();
    assert_eq!(a.values(), b.values());
    assert_eq!(da, db);
}
