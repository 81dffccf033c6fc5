//! End-to-end checks of the binary: exit codes, validation output and a
//! small complete run.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_moderate"))
}

fn write_config(name: &str, text: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("moderate_cli_tests");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const SMALL: &str = r#"
experiment = "zeta"
seed = 5

[kernel]
kind = "biot-savart"
epsilon = 0.3

[mollifier]
beta = 0.015625

[particles]
n_list = [32, 64]
density = "bump"
radius = 1.5

[grid]
n = 128
half_width = 4.0

[run]
replicas = 32
"#;

#[test]
fn validate_accepts_good_config() {
    let cfg = write_config("good.toml", SMALL);
    let out = bin()
        .args(["validate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok"));
}

#[test]
fn validate_lists_every_violation_with_exit_2() {
    let bad = SMALL
        .replace("seed = 5\n", "")
        .replace("beta = 0.015625", "beta = 0.5")
        .replace("replicas = 32", "replicas = 0");
    let cfg = write_config("bad.toml", &bad);
    let out = bin()
        .args(["validate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("seed missing"), "{err}");
    assert!(err.contains("beta"), "{err}");
    assert!(err.contains("replicas"), "{err}");
}

#[test]
fn seed_flag_satisfies_missing_seed() {
    let noseed = SMALL.replace("seed = 5\n", "");
    let cfg = write_config("noseed.toml", &noseed);
    let out = bin()
        .args(["validate", "--seed", "77", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn small_run_writes_outputs() {
    let cfg = write_config("run.toml", SMALL);
    let out_dir = std::env::temp_dir().join("moderate_cli_tests/zeta_out");
    let _ = std::fs::remove_dir_all(&out_dir);
    let out = bin()
        .args(["zeta", "--threads", "2", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("zeta.csv").exists());
    let meta = std::fs::read_to_string(out_dir.join("metadata.json")).unwrap();
    assert!(meta.contains("\"status\": \"ok\""));
    assert!(meta.contains("\"schema_version\""));
    let csv = std::fs::read_to_string(out_dir.join("zeta.csv")).unwrap();
    assert!(csv.starts_with("# schema=1\n"));
    let _ = std::fs::remove_dir_all(&out_dir);
}

#[test]
fn exploratory_flag_lifts_beta_range() {
    let wide = SMALL.replace("beta = 0.015625", "beta = 0.1");
    let cfg = write_config("wide.toml", &wide);
    let strict = bin()
        .args(["validate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(strict.status.code(), Some(2));
    let loose = bin()
        .args(["validate", "--exploratory", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(loose.status.success());
}
