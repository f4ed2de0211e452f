//! Command-line behaviour and exit codes.

mod common;

use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onn-trojan-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let fx = common::fixtures();
    let text = format!(
        r#"
seed = 11
trials = 2
subsample = 20
output_dir = "out"

[dataset]
images = "{images}"
labels = "{labels}"

[[variants]]
name = "original"
archive = "{archive}"

[scenarios]
kinds = ["actuation", "hotspot"]
scopes = ["fc"]
fractions = [0.01]
"#,
        images = fx.join("mnist/test-images-idx3-ubyte").display(),
        labels = fx.join("mnist/test-labels-idx1-ubyte").display(),
        archive = fx.join("original.slwa").display(),
    );
    let path = dir.join("campaign.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(code(&sim(&[])), 1);
    assert_eq!(code(&sim(&["frobnicate"])), 1);
    assert_eq!(code(&sim(&["run"])), 1);
    assert_eq!(code(&sim(&["--help"])), 0);
    assert_eq!(code(&sim(&["--version"])), 0);
}

#[test]
fn missing_or_invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = sim(&["validate", "--config", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.toml"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = 1\nunknown_key = 2\n").unwrap();
    assert_eq!(code(&sim(&["validate", "--config", bad.to_str().unwrap()])), 1);
}

#[test]
fn shipped_config_validates() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/mnist.toml");
    let out = sim(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("2780000 MRs in 11000 banks"), "{text}");
    assert!(text.contains("44164 parameters"), "{text}");
    assert!(text.contains("43930 mapped slots"), "{text}");
    assert!(text.contains("18 x 10 trials x 1 variants = 180 rows"), "{text}");
}

#[test]
fn run_emit_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg_s = cfg.to_str().unwrap();
    let out = sim(&["run", "--config", cfg_s]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out_dir = dir.path().join("out");
    for f in ["report.json", "results.csv", "summary.json"] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);

    std::fs::remove_file(out_dir.join("results.csv")).unwrap();
    assert_eq!(code(&sim(&["emit", "--config", cfg_s])), 0);
    assert_eq!(std::fs::read_to_string(out_dir.join("results.csv")).unwrap(), csv);

    let table = sim(&["compare", "--config", cfg_s, "--robust", "original"]);
    assert_eq!(code(&table), 0);
    assert_eq!(String::from_utf8_lossy(&table.stdout).lines().count(), 1 + 2);
    assert_eq!(code(&sim(&["compare", "--config", cfg_s, "--robust", "absent"])), 1);

    let missing_report = dir.path().join("none.json");
    assert_eq!(code(&sim(&["emit", "--report", missing_report.to_str().unwrap()])), 2);
}
