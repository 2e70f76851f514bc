//! End-to-end pipeline runs through the compiled binary.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ldp-hist"))
}

fn run_ok(args: &[&str]) -> String {
    let output = bin().args(args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout).expect("utf8 stdout")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_perturb_estimate_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let values = dir.path().join("values.txt");
    run_ok(&[
        "--seed", "7", "gen", "--dist", "beta", "--a", "5", "--b", "2", "--n", "20000",
        "--out", path_str(&values),
    ]);

    // square wave -> EMS
    let reports = dir.path().join("sw.txt");
    run_ok(&[
        "--seed", "7", "perturb", "--mechanism", "sw", "--epsilon", "1.0",
        "--in", path_str(&values), "--out", path_str(&reports),
    ]);
    let estimate = dir.path().join("ems.txt");
    run_ok(&[
        "estimate", "--method", "ems", "--epsilon", "1.0", "--buckets", "64",
        "--in", path_str(&reports), "--out", path_str(&estimate),
    ]);
    let stdout = run_ok(&[
        "--seed", "5", "eval", "--truth", path_str(&values), "--estimate", path_str(&estimate),
        "--metrics", "w1,ks,range:0.1,range:0.4,mean,var,quantiles",
    ]);
    let mut w1 = f64::NAN;
    for line in stdout.lines() {
        let (name, value) = line.split_once(',').expect("metric,value");
        let value: f64 = value.parse().expect("numeric metric");
        assert!(value.is_finite() && value >= 0.0, "{name} = {value}");
        if name == "w1" {
            w1 = value;
        }
    }
    assert!(w1 < 0.05, "pipeline W1 {w1} unexpectedly large");

    // categorical path: grr + normsub with binning spread
    let grr = dir.path().join("grr.txt");
    run_ok(&[
        "--seed", "9", "perturb", "--mechanism", "grr", "--epsilon", "2.0",
        "--buckets", "16", "--in", path_str(&values), "--out", path_str(&grr),
    ]);
    let ns = dir.path().join("normsub.txt");
    run_ok(&[
        "estimate", "--method", "normsub", "--epsilon", "2.0", "--buckets", "64",
        "--in", path_str(&grr), "--out", path_str(&ns),
    ]);
    let stdout = run_ok(&[
        "eval", "--truth", path_str(&values), "--estimate", path_str(&ns), "--metrics", "w1",
    ]);
    let w1: f64 = stdout.trim().strip_prefix("w1,").unwrap().parse().unwrap();
    assert!(w1 < 0.1, "binning W1 {w1}");

    // hierarchy end-to-end from values
    let admm = dir.path().join("admm.txt");
    run_ok(&[
        "--seed", "11", "estimate", "--method", "hh-admm", "--epsilon", "1.0",
        "--buckets", "64", "--in", path_str(&values), "--out", path_str(&admm),
    ]);
    let stdout = run_ok(&[
        "eval", "--truth", path_str(&values), "--estimate", path_str(&admm),
        "--metrics", "range:0.1",
    ]);
    let range: f64 = stdout.trim().strip_prefix("range:0.1,").unwrap().parse().unwrap();
    assert!(range < 0.1, "hh-admm range error {range}");
}

#[test]
fn discrete_wave_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let values = dir.path().join("values.txt");
    run_ok(&[
        "--seed", "3", "gen", "--dist", "beta", "--a", "2", "--b", "5", "--n", "10000",
        "--out", path_str(&values),
    ]);
    let reports = dir.path().join("swd.txt");
    run_ok(&[
        "--seed", "3", "perturb", "--mechanism", "sw-discrete", "--epsilon", "1.0",
        "--buckets", "32", "--in", path_str(&values), "--out", path_str(&reports),
    ]);
    let estimate = dir.path().join("em.txt");
    run_ok(&[
        "estimate", "--method", "em", "--epsilon", "1.0", "--buckets", "32",
        "--in", path_str(&reports), "--out", path_str(&estimate),
    ]);
    let stdout = run_ok(&[
        "eval", "--truth", path_str(&values), "--estimate", path_str(&estimate), "--metrics", "w1,ks",
    ]);
    assert_eq!(stdout.lines().count(), 2);
}

#[test]
fn exit_codes_match_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    // config error: unknown mechanism
    let values = dir.path().join("v.txt");
    std::fs::write(&values, "0.5\n").unwrap();
    let out = bin()
        .args(["perturb", "--mechanism", "nope", "--epsilon", "1.0", "--in", path_str(&values),
               "--out", path_str(&dir.path().join("x.txt"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // config error: missing --buckets
    let out = bin()
        .args(["perturb", "--mechanism", "grr", "--epsilon", "1.0", "--in", path_str(&values),
               "--out", path_str(&dir.path().join("x.txt"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // data error: missing input file
    let out = bin()
        .args(["perturb", "--mechanism", "sw", "--epsilon", "1.0", "--in",
               path_str(&dir.path().join("missing.txt")), "--out", path_str(&dir.path().join("x.txt"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    // data error: value outside [0, 1]
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "1.5\n").unwrap();
    let out = bin()
        .args(["perturb", "--mechanism", "sw", "--epsilon", "1.0", "--in", path_str(&bad),
               "--out", path_str(&dir.path().join("x.txt"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn experiment_command_writes_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{
            "dataset": {
                "name": "beta(5,2)",
                "source": {"kind": "beta", "alpha": 5.0, "beta": 2.0, "n": 5000},
                "buckets": 32
            },
            "methods": [{"method": "sw-ems"}, {"method": "cfo-binning", "c": 16}],
            "epsilons": [1.0],
            "repetitions": 2,
            "metrics": ["w1", "ks"],
            "seed": 13
        }"#,
    )
    .unwrap();
    let records = dir.path().join("records.ndjson");
    let stdout = run_ok(&[
        "experiment", "--config", path_str(&config), "--out", path_str(&records),
    ]);
    assert!(stdout.starts_with("method,dataset,metric,epsilon,n,mean,std"));
    let body = std::fs::read_to_string(&records).unwrap();
    assert_eq!(body.lines().count(), 2 * 2 * 2);
    for line in body.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("wall_ms").is_none(), "timing must stay out of records");
        assert!(v["value"].as_f64().unwrap().is_finite());
    }
    let summary = std::fs::read_to_string(dir.path().join("records.summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4);
    // method/metric validity is enforced with exit code 2
    let bad_config = dir.path().join("bad.json");
    std::fs::write(
        &bad_config,
        r#"{
            "dataset": {
                "name": "beta(5,2)",
                "source": {"kind": "beta", "alpha": 5.0, "beta": 2.0, "n": 5000},
                "buckets": 32
            },
            "methods": [{"method": "hh"}],
            "epsilons": [1.0],
            "repetitions": 1,
            "metrics": ["w1"],
            "seed": 13
        }"#,
    )
    .unwrap();
    let out = bin()
        .args(["experiment", "--config", path_str(&bad_config), "--out",
               path_str(&dir.path().join("r.ndjson"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("valid metrics"), "stderr: {stderr}");
}
