use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn xdomain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xdomain")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

/// The single JSON error line on stderr.
fn error_line(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("`{line}` is not JSON: {e}"))
}

fn write_tiny_config(dir: &Path) -> std::path::PathBuf {
    let text = format!(
        "pair = \"toy\"\nscheme = \"mmd\"\nd_z = 4\nsigma = 1.0\nlambda0 = 1.0\nlambda1 = 10.0\nlambda2 = 0.1\n\
         lambda3 = 0.1\nlambda4 = 1.0\nmax_iterations = 6\neval_every = 3\ntrain_batch = 4\ntest_batch = 50\n\
         width_divisor = 32\ncheckpoint_every = 3\ntoy_per_class = 10\ntoy_test_per_class = 5\npanels = false\n\
         output_dir = \"{}\"\n",
        dir.join("run").display()
    );
    let path = dir.join("tiny.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = xdomain(&["train", "--config", "definitely/not/here.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_line(&out);
    assert_eq!(e["error"], "usage");
    assert_eq!(e["exit"], 2);
}

#[test]
fn unknown_subcommand_and_bad_flags_exit_2() {
    for args in [&["frobnicate"][..], &["train"], &["metrics-selftest", "--seed", "minus one"]] {
        let out = xdomain(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(error_line(&out)["error"], "usage");
    }
    assert_eq!(xdomain(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_config_value_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out = xdomain(&["train", "--config", cfg.to_str().unwrap(), "--set", "lambda2=-1"]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_line(&out);
    assert_eq!(e["error"], "config");
    assert!(e["message"].as_str().unwrap().contains("lambda2"), "{e}");
}

#[test]
fn corpus_pair_without_data_root_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_xdomain"))
        .args(["train", "--config", cfg.to_str().unwrap(), "--set", "pair=\"mnist2usps\""])
        .env_remove("XDOMAIN_DATA_ROOT")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupt_checkpoint_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("bad.ckpt");
    std::fs::write(&ck, b"not a checkpoint").unwrap();
    let out = xdomain(&["eval", "--checkpoint", ck.to_str().unwrap(), "--pair", "toy"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "checkpoint");
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out = xdomain(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let best: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(best["pair"], "toy");
    let run = dir.path().join("run");
    for f in ["metrics.csv", "summary.json", "best.ckpt", "step_3.ckpt", "step_6.ckpt"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let ck = run.join("step_6.ckpt");
    let out = xdomain(&["eval", "--checkpoint", ck.to_str().unwrap(), "--pair", "toy"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["step"], 6);
    assert_eq!(r["n_evaluated"], 50);
    let rows = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 6 + 1, "one row per step plus the appended eval");

    let out = xdomain(&["eval", "--checkpoint", ck.to_str().unwrap(), "--pair", "mnist:usps"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn metrics_selftest_reports_every_property() {
    let out = xdomain(&["metrics-selftest"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 10);
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
}

#[test]
fn export_toy_writes_images_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let out = xdomain(&["export-toy", "--out", dir.path().to_str().unwrap(), "--per-class", "1"]);
    assert!(out.status.success());
    for d in ["a", "b"] {
        let labels = std::fs::read_to_string(dir.path().join(d).join("labels.txt")).unwrap();
        assert_eq!(labels.lines().count(), 10);
        assert!(dir.path().join(d).join("00009.png").exists());
    }
}

#[test]
fn oversized_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out =
        xdomain(&["train", "--config", cfg.to_str().unwrap(), "--seed", "18446744073709551615", "--set", "d_z=3"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "config");
}
