//! Command-line harness: dataset generation, per-mechanism perturbation,
//! estimation, metric evaluation and full experiment runs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ldp_hist::baselines::{pm_perturb, sr_perturb, PmParams};
use ldp_hist::core::{BucketSpec, Histogram, PrivacyParams, ReportBatch, RngSeed};
use ldp_hist::error::{Error, Result};
use ldp_hist::fo::{
    grr_aggregate, grr_perturb_batch, hrr_estimate, hrr_perturb_batch, norm_sub, olh_aggregate,
    olh_perturb, GrrParams, HrrParams, OlhParams,
};
use ldp_hist::hierarchy::{
    constrained_inference, haar_report_batch, haar_reconstruct, hh_admm_leaves, hh_aggregate,
    hh_report_batch, AdmmConfig, TreeShape,
};
use ldp_hist::metrics::{
    ks_distance, mean_of, quantiles_mae, range_query_mae, variance_of, wasserstein,
};
use ldp_hist::reconstruct::{reconstruct, EmConfig, ReportHistogram};
use ldp_hist::wave::{
    build_transition_matrix, discrete_b, optimal_b, sw_perturb_batch, sw_perturb_discrete_batch,
    DiscreteSwParams, SwParams,
};
use ldp_hist_cli::dataset::{load_dataset, DataSource, DatasetSpec};
use ldp_hist_cli::experiment::{run_experiment, summarize, ExperimentConfig, MetricSpec};
use ldp_hist_cli::report_io::{
    read_distribution_input, read_histogram, read_reports, read_values, write_histogram,
    write_reports, write_values, ReportMeta,
};

#[derive(Parser)]
#[command(name = "ldp-hist", about = "Distribution estimation under local differential privacy")]
struct Cli {
    /// Master seed for all randomized stages.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads for experiment cells (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the repetition count of an experiment config.
    #[arg(long, global = true)]
    repetitions: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (one value per line).
    Gen {
        /// Distribution family; only `beta` is supported.
        #[arg(long)]
        dist: String,
        /// First shape parameter.
        #[arg(long)]
        a: f64,
        /// Second shape parameter.
        #[arg(long)]
        b: f64,
        /// Sample count.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Perturb a values file with a local mechanism.
    Perturb {
        /// sw | sw-discrete | grr | olh | hrr | sr | pm
        #[arg(long)]
        mechanism: String,
        #[arg(long)]
        epsilon: f64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Categorical domain size (required for sw-discrete, grr, olh, hrr).
        #[arg(long)]
        buckets: Option<usize>,
        /// Override the square-wave half-width (default: the
        /// mutual-information optimum).
        #[arg(long)]
        b: Option<f64>,
    },
    /// Reconstruct a histogram from reports (ems, em, normsub) or run a
    /// hierarchy estimator end-to-end from a values file (hh, haar, hh-admm).
    Estimate {
        /// ems | em | normsub | hh | haar | hh-admm
        #[arg(long)]
        method: String,
        #[arg(long)]
        epsilon: f64,
        /// Output histogram granularity.
        #[arg(long)]
        buckets: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Hierarchy branching factor.
        #[arg(long, default_value_t = 4)]
        branching: usize,
    },
    /// Evaluate utility metrics of an estimate against the ground truth.
    Eval {
        /// Ground truth: a values file or a histogram file.
        #[arg(long)]
        truth: PathBuf,
        /// Histogram file produced by `estimate`.
        #[arg(long)]
        estimate: PathBuf,
        /// Comma-separated list, e.g. `w1,ks,range:0.1,range:0.4,mean,var,quantiles`.
        #[arg(long)]
        metrics: String,
        /// Random range queries per range width.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Run a full experiment from a JSON config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Records output path (newline-delimited JSON); the summary CSV goes
        /// next to it.
        #[arg(long, default_value = "records.ndjson")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::InvalidArgument(_) => 2,
                Error::InvalidData(_) => 3,
                Error::Degenerate(_) => 4,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = RngSeed(cli.seed);
    match cli.command {
        Command::Gen { dist, a, b, n, out } => {
            if dist != "beta" {
                return Err(Error::InvalidArgument(format!(
                    "unknown distribution {dist:?}; supported: beta"
                )));
            }
            let spec = DatasetSpec {
                name: format!("beta({a},{b})"),
                source: DataSource::Beta { alpha: a, beta: b, n },
                filter_lo: None,
                filter_hi: None,
                buckets: 1,
            };
            let values = load_dataset(&spec, seed)?;
            write_values(&out, &values)?;
            eprintln!("wrote {} values to {}", values.len(), out.display());
            Ok(())
        }
        Command::Perturb { mechanism, epsilon, input, out, buckets, b } => {
            perturb_command(&mechanism, epsilon, &input, &out, buckets, b, seed)
        }
        Command::Estimate { method, epsilon, buckets, input, out, branching } => {
            estimate_command(&method, epsilon, buckets, &input, &out, branching, seed)
        }
        Command::Eval { truth, estimate, metrics, trials } => {
            eval_command(&truth, &estimate, &metrics, trials, seed)
        }
        Command::Experiment { config, out } => {
            let text = std::fs::read_to_string(&config).map_err(|e| {
                Error::InvalidData(format!("cannot read config {}: {e}", config.display()))
            })?;
            let mut experiment: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
                Error::InvalidArgument(format!("bad config {}: {e}", config.display()))
            })?;
            if let Some(reps) = cli.repetitions {
                experiment.repetitions = reps;
            }
            let start = std::time::Instant::now();
            let records = run_experiment(&experiment)?;
            let ndjson = ldp_hist_cli::experiment::records_to_ndjson(&records)?;
            std::fs::write(&out, ndjson)
                .map_err(|e| Error::InvalidData(format!("cannot write {}: {e}", out.display())))?;
            let rows = summarize(&records);
            let csv = ldp_hist_cli::experiment::summary_to_csv(&rows);
            let summary_path = out.with_extension("summary.csv");
            std::fs::write(&summary_path, &csv).map_err(|e| {
                Error::InvalidData(format!("cannot write {}: {e}", summary_path.display()))
            })?;
            print!("{csv}");
            eprintln!(
                "{} records in {:.1}s -> {} / {}",
                records.len(),
                start.elapsed().as_secs_f64(),
                out.display(),
                summary_path.display()
            );
            Ok(())
        }
    }
}

fn require_buckets(buckets: Option<usize>, mechanism: &str) -> Result<usize> {
    buckets.ok_or_else(|| {
        Error::InvalidArgument(format!("--buckets is required for mechanism {mechanism}"))
    })
}

fn perturb_command(
    mechanism: &str,
    epsilon: f64,
    input: &Path,
    out: &Path,
    buckets: Option<usize>,
    b_override: Option<f64>,
    seed: RngSeed,
) -> Result<()> {
    let privacy = PrivacyParams::new(epsilon)?;
    let values = read_values(input)?;
    for &v in &values {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidData(format!("input value {v} outside [0, 1]")));
        }
    }
    let n = values.len();
    let mut meta = ReportMeta::new(mechanism, epsilon, n);
    let batch = match mechanism {
        "sw" => {
            let b = b_override.unwrap_or_else(|| optimal_b(epsilon));
            let params = SwParams::new(&privacy, b)?;
            meta.b = Some(b);
            ReportBatch::Values(sw_perturb_batch(&values, &params, seed)?)
        }
        "sw-discrete" => {
            let d = require_buckets(buckets, mechanism)?;
            let spec = BucketSpec::unit(d)?;
            let indices: Vec<u32> =
                values.iter().map(|&v| spec.bucket_of(v).map(|k| k as u32)).collect::<Result<_>>()?;
            let params = DiscreteSwParams::new(d, &privacy)?;
            meta.buckets = Some(d);
            meta.b_discrete = Some(params.b());
            ReportBatch::Indices(sw_perturb_discrete_batch(&indices, &params, seed)?)
        }
        "grr" => {
            let d = require_buckets(buckets, mechanism)?;
            let spec = BucketSpec::unit(d)?;
            let indices: Vec<u32> =
                values.iter().map(|&v| spec.bucket_of(v).map(|k| k as u32)).collect::<Result<_>>()?;
            let params = GrrParams::new(d, &privacy)?;
            meta.buckets = Some(d);
            ReportBatch::Indices(grr_perturb_batch(&indices, &params, seed)?)
        }
        "olh" => {
            let d = require_buckets(buckets, mechanism)?;
            let spec = BucketSpec::unit(d)?;
            let params = OlhParams::new(&privacy)?;
            meta.buckets = Some(d);
            meta.g = Some(params.g());
            let reports = values
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let idx = spec.bucket_of(v)? as u32;
                    Ok(olh_perturb(idx, &params, &mut seed.user_stream(i as u64)))
                })
                .collect::<Result<_>>()?;
            ReportBatch::KeyedHashes(reports)
        }
        "hrr" => {
            let d = require_buckets(buckets, mechanism)?;
            let spec = BucketSpec::unit(d)?;
            let indices: Vec<u32> =
                values.iter().map(|&v| spec.bucket_of(v).map(|k| k as u32)).collect::<Result<_>>()?;
            let params = HrrParams::new(d)?;
            meta.buckets = Some(d);
            meta.order = Some(params.order());
            ReportBatch::RowSigns(hrr_perturb_batch(&indices, &params, &privacy, seed)?)
        }
        "sr" => ReportBatch::Values(
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    sr_perturb(2.0 * v - 1.0, &privacy, &mut seed.user_stream(i as u64))
                })
                .collect::<Result<_>>()?,
        ),
        "pm" => {
            let params = PmParams::new(&privacy);
            ReportBatch::Values(
                values
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        pm_perturb(2.0 * v - 1.0, &params, &mut seed.user_stream(i as u64))
                    })
                    .collect::<Result<_>>()?,
            )
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown mechanism {other:?}; supported: sw, sw-discrete, grr, olh, hrr, sr, pm"
            )))
        }
    };
    write_reports(out, &meta, &batch)?;
    eprintln!("wrote {n} {mechanism} reports to {}", out.display());
    Ok(())
}

fn estimate_command(
    method: &str,
    epsilon: f64,
    buckets: usize,
    input: &Path,
    out: &Path,
    branching: usize,
    seed: RngSeed,
) -> Result<()> {
    let privacy = PrivacyParams::new(epsilon)?;
    let hist = match method {
        "ems" | "em" => {
            let (meta, batch) = read_reports(input)?;
            let config =
                if method == "ems" { EmConfig::ems() } else { EmConfig::em(&privacy) };
            match (&meta.mechanism[..], batch) {
                ("sw", ReportBatch::Values(reports)) => {
                    let b = meta.b.ok_or_else(|| {
                        Error::InvalidData("sw reports are missing the half-width b".into())
                    })?;
                    let params = SwParams::new(&privacy, b)?;
                    let matrix = build_transition_matrix(&params, buckets, buckets);
                    let spec = BucketSpec::new(-b, 1.0 + b, buckets)?;
                    let counts = ReportHistogram::bucketize(&reports, &spec)?;
                    reconstruct(&counts, &matrix, &config)?.0
                }
                ("sw-discrete", ReportBatch::Indices(reports)) => {
                    let d = meta.buckets.ok_or_else(|| {
                        Error::InvalidData("sw-discrete reports are missing the domain size".into())
                    })?;
                    if d != buckets {
                        return Err(Error::InvalidArgument(format!(
                            "--buckets {buckets} does not match the reports' domain size {d}"
                        )));
                    }
                    let b = meta.b_discrete.unwrap_or_else(|| discrete_b(&privacy, d));
                    let params = DiscreteSwParams::with_b(d, b, &privacy)?;
                    let counts = ReportHistogram::from_indices(&reports, params.d_tilde())?;
                    reconstruct(&counts, &params.transition_matrix(), &config)?.0
                }
                (mech, _) => {
                    return Err(Error::InvalidArgument(format!(
                        "method {method} expects sw or sw-discrete reports, got {mech}"
                    )))
                }
            }
        }
        "normsub" => {
            let (meta, batch) = read_reports(input)?;
            let c = meta.buckets.ok_or_else(|| {
                Error::InvalidData("categorical reports are missing the domain size".into())
            })?;
            if !buckets.is_multiple_of(c) {
                return Err(Error::InvalidArgument(format!(
                    "report bins {c} must divide --buckets {buckets}"
                )));
            }
            let estimate = match (&meta.mechanism[..], batch) {
                ("grr", ReportBatch::Indices(reports)) => {
                    grr_aggregate(&reports, &GrrParams::new(c, &privacy)?)?
                }
                ("olh", ReportBatch::KeyedHashes(reports)) => {
                    let g = meta
                        .g
                        .ok_or_else(|| Error::InvalidData("olh reports are missing g".into()))?;
                    olh_aggregate(&reports, &OlhParams::with_g(g, &privacy)?, c)?
                }
                ("hrr", ReportBatch::RowSigns(reports)) => {
                    let order = meta.order.ok_or_else(|| {
                        Error::InvalidData("hrr reports are missing the Hadamard order".into())
                    })?;
                    let padded =
                        hrr_estimate(&reports, &HrrParams::with_order(order)?, &privacy)?;
                    Histogram::from_values(padded[..c].to_vec())?
                }
                (mech, _) => {
                    return Err(Error::InvalidArgument(format!(
                        "method normsub expects grr, olh or hrr reports, got {mech}"
                    )))
                }
            };
            let coarse = norm_sub(estimate.values())?;
            let per_bin = buckets / c;
            let mut fine = Vec::with_capacity(buckets);
            for mass in coarse {
                for _ in 0..per_bin {
                    fine.push(mass / per_bin as f64);
                }
            }
            Histogram::simplex(fine)?
        }
        "hh" | "hh-admm" => {
            let values = read_values(input)?;
            let shape = TreeShape::for_domain(branching, buckets)?;
            let spec = BucketSpec::unit(buckets)?;
            let leaves: Vec<usize> =
                values.iter().map(|&v| spec.bucket_of(v)).collect::<Result<_>>()?;
            let reports = hh_report_batch(&leaves, &shape, &privacy, seed)?;
            let tree = hh_aggregate(&reports, &shape, &privacy)?;
            if method == "hh" {
                let consistent = constrained_inference(&tree)?;
                Histogram::from_values(consistent.leaves()[..buckets].to_vec())?
            } else {
                let (leaves, diag) = hh_admm_leaves(&tree, &AdmmConfig::default())?;
                if !diag.converged {
                    eprintln!(
                        "warning: ADMM stopped at the iteration cap (residual {:.2e})",
                        diag.final_residual
                    );
                }
                Histogram::from_values(leaves.values()[..buckets].to_vec())?.normalize()?
            }
        }
        "haar" => {
            let values = read_values(input)?;
            let d_pad = buckets.next_power_of_two().max(2);
            let spec = BucketSpec::unit(buckets)?;
            let leaves: Vec<usize> =
                values.iter().map(|&v| spec.bucket_of(v)).collect::<Result<_>>()?;
            let reports = haar_report_batch(&leaves, d_pad, &privacy, seed)?;
            let est = haar_reconstruct(&reports, d_pad, &privacy)?;
            Histogram::from_values(est.values()[..buckets].to_vec())?
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown method {other:?}; supported: ems, em, normsub, hh, haar, hh-admm"
            )))
        }
    };
    write_histogram(out, &hist)?;
    eprintln!("wrote {}-bucket estimate to {}", hist.len(), out.display());
    Ok(())
}

fn eval_command(
    truth_path: &Path,
    estimate_path: &Path,
    metrics: &str,
    trials: usize,
    seed: RngSeed,
) -> Result<()> {
    let estimate = read_histogram(estimate_path)?;
    let truth = read_distribution_input(truth_path, estimate.len())?;
    if truth.len() != estimate.len() {
        return Err(Error::InvalidArgument(format!(
            "truth has {} buckets, estimate has {}",
            truth.len(),
            estimate.len()
        )));
    }
    let specs: Vec<MetricSpec> =
        metrics.split(',').map(str::parse).collect::<Result<_>>()?;
    for spec in specs {
        let value = match spec {
            MetricSpec::W1 => wasserstein(&truth, &estimate)?,
            MetricSpec::Ks => ks_distance(&truth, &estimate)?,
            MetricSpec::Range(alpha) => range_query_mae(
                &truth,
                &estimate,
                alpha,
                trials,
                seed.derive(&[alpha.to_bits()]),
            )?,
            MetricSpec::Mean => (mean_of(&truth) - mean_of(&estimate)).abs(),
            MetricSpec::Var => (variance_of(&truth) - variance_of(&estimate)).abs(),
            MetricSpec::Quantiles => quantiles_mae(&truth, &estimate)?,
        };
        println!("{spec},{value}");
    }
    Ok(())
}
