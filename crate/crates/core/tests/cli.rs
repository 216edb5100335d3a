//! CLI behavior: exit codes, output files, and the assertion switches.

use std::fs;
use std::path::Path;

use intermittent::cli::run_from;

fn run(args: &[&str]) -> (i32, String) {
    let mut buf = Vec::new();
    let status = run_from(args.iter().copied(), &mut buf);
    (status, String::from_utf8(buf).unwrap())
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

const FAIR_COIN: &str = r#"{
    "model": {"kind": "iid", "dist": {"name": "bernoulli", "p": 0.5}},
    "family": {"kind": "finite_alphabet_exact", "alphabet": [0.0, 1.0]},
    "schedule": {"rule": "log_floor", "c": 1.0},
    "seeds": {"base": 1, "count": 20},
    "horizon": 100000,
    "k_max": 60
}"#;

const DEGENERATE: &str = r#"{
    "model": {"kind": "iid", "dist": {"name": "bernoulli", "p": 1.0}},
    "family": {"kind": "finite_alphabet_exact", "alphabet": [0.0, 1.0]},
    "schedule": {"rule": "linear"},
    "seeds": {"base": 1, "count": 30},
    "horizon": 2000,
    "k_max": 25
}"#;

const ODOMETER_BOUND: &str = r#"{
    "model": {"kind": "odometer", "bits": 48},
    "family": {"kind": "dyadic_finite", "lo": 0.0, "hi": 1.0, "cells": {"rule": "logarithmic"}},
    "schedule": {"rule": "log_floor", "c": 3.0},
    "seeds": {"base": 1, "count": 50},
    "horizon": 20000,
    "k_max": 15,
    "epsilon": 1.0
}"#;

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let (status, _) = run(&["intermittent", "frobnicate"]);
    assert_eq!(status, 2);
    let (status, _) = run(&["intermittent"]);
    assert_eq!(status, 2);
}

#[test]
fn trace_requires_exactly_one_input_mode() {
    let (status, _) = run(&["intermittent", "trace"]);
    assert_eq!(status, 2);
}

#[test]
fn trace_infers_the_alphabet_from_the_samples() {
    let (status, text) = run(&["intermittent", "trace", "--samples", "0,0,0,0,0", "--k-max", "2"]);
    assert_eq!(status, 0);
    assert!(text.contains("k=1 eta=1 zeta=1 g=0"));
    assert!(text.contains("k=2 eta=1 zeta=2 g=0"));
}

#[test]
fn trace_reports_truncation_on_short_paths() {
    let (status, text) =
        run(&["intermittent", "trace", "--samples", "0,1", "--lags", "1,2", "--k-max", "2"]);
    assert_eq!(status, 0);
    assert!(text.contains("truncated: scanning stage 1 after 2 samples"), "{text}");
}

#[test]
fn trace_dump_and_replay_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "coin.json", FAIR_COIN);
    let dump = dir.path().join("path.csv");
    let (status, sampled) = run(&[
        "intermittent",
        "trace",
        "--config",
        &config,
        "--k-max",
        "6",
        "--dump-path",
        &dump.display().to_string(),
    ]);
    assert_eq!(status, 0);
    // Replaying the persisted path reproduces the same stopping times.
    let (status, replayed) = run(&[
        "intermittent",
        "trace",
        "--samples-file",
        &dump.display().to_string(),
        "--lags",
        "1,1,1,2,2,2",
        "--k-max",
        "6",
    ]);
    assert_eq!(status, 0);
    for line in sampled.lines().filter(|l| l.starts_with("k=")) {
        let prefix = line.split(" oracle=").next().unwrap();
        assert!(replayed.contains(prefix), "missing {prefix:?} in replay:\n{replayed}");
    }
}

#[test]
fn trace_from_a_config_prints_oracle_columns() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "coin.json", FAIR_COIN);
    let (status, text) = run(&["intermittent", "trace", "--config", &config, "--k-max", "5"]);
    assert_eq!(status, 0);
    assert!(text.contains("seed=1"));
    assert!(text.contains("oracle=0.5"));
}

#[test]
fn simulate_writes_the_report_files_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "coin.json", FAIR_COIN);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let (status, text) =
            run(&["intermittent", "simulate", "--config", &config, "--out", &out.display().to_string()]);
        assert_eq!(status, 0, "{text}");
    }
    for name in ["predictions.csv", "events.csv", "curves.csv"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between reruns");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seeds"], 20);
    assert!(summary["config_sha256"].as_str().unwrap().len() == 64);
    assert_eq!(summary["counters"]["truncated_seeds"], 0);
}

#[test]
fn simulate_assert_checks_the_error_trend() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "coin.json", FAIR_COIN);
    let (status, text) = run(&["intermittent", "simulate", "--config", &config, "--assert"]);
    assert_eq!(status, 0, "{text}");
    assert!(text.contains("PASS mse_trend"));
    // A single aggregated level cannot show a trend: the check fails.
    let (status, text) =
        run(&["intermittent", "simulate", "--config", &config, "--assert", "--k-max", "1"]);
    assert_eq!(status, 1);
    assert!(text.contains("FAIL mse_trend"));
}

#[test]
fn simulate_seed_override_trims_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "coin.json", FAIR_COIN);
    let (status, text) = run(&["intermittent", "simulate", "--config", &config, "--seeds", "3"]);
    assert_eq!(status, 0);
    assert!(text.contains("seeds=3"));
}

#[test]
fn dist_check_passes_on_the_degenerate_source() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "ones.json", DEGENERATE);
    let (status, text) = run(&[
        "intermittent",
        "dist-check",
        "--config",
        &config,
        "--levels",
        "3,7",
        "--assert",
    ]);
    assert_eq!(status, 0, "{text}");
    assert!(text.contains("k=3 n_successors=30 n_marginal=30 ks=0"));
    assert!(text.contains("PASS dist_check_k3"));
    assert!(text.contains("PASS dist_check_k7"));
}

#[test]
fn verify_bound_reports_rates_and_asserts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "odometer.json", ODOMETER_BOUND);
    let (status, text) = run(&["intermittent", "verify-bound", "--config", &config, "--assert"]);
    assert_eq!(status, 0, "{text}");
    assert!(text.contains("ceiling series: summable"));
    assert!(text.contains("PASS bound_violation_rate"));

    // Without an epsilon anywhere the command cannot run.
    let bare = write_config(dir.path(), "bare.json", FAIR_COIN);
    let (status, _) = run(&["intermittent", "verify-bound", "--config", &bare]);
    assert_eq!(status, 2);
}

#[test]
fn config_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.json", r#"{"model": "nope"}"#);
    let (status, _) = run(&["intermittent", "simulate", "--config", &bad]);
    assert_eq!(status, 2);
    let (status, _) = run(&["intermittent", "simulate", "--config", "/nonexistent.json"]);
    assert_eq!(status, 2);
}
