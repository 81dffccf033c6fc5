//! Integration checks of the experiment runner: every experiment runs end to
//! end on a small configuration and writes its documented schema.

use moderate_core::config::{validate, RunConfig};
use moderate_core::runner::run;
use std::fs;
use std::path::PathBuf;

fn out_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("moderate_experiments").join(name);
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn run_toml(toml: &str, name: &str) -> (PathBuf, moderate_core::runner::RunRecord) {
    let cfg = RunConfig::from_toml(toml).unwrap();
    let resolved =
        validate(&cfg, None, None).unwrap_or_else(|v| panic!("config for {name} invalid: {v:?}"));
    let dir = out_dir(name);
    let record = run(&resolved, &dir, Some(2)).unwrap();
    assert_eq!(record.status, "ok", "{name}: {:?}", record.error);
    (dir, record)
}

fn assert_csv_schema(path: &PathBuf, columns: &str) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "# schema=1");
    assert!(lines.next().unwrap().starts_with("# experiment="));
    assert_eq!(lines.next().unwrap(), columns);
    assert!(lines.next().is_some(), "{path:?} has no data rows");
}

#[test]
fn simulate_writes_positions_and_summary() {
    let (dir, record) = run_toml(
        r#"
experiment = "simulate"
seed = 2

[kernel]
kind = "biot-savart"
epsilon = 0.5

[mollifier]
beta = 0.015625

[noise]
coupled = true
modes = 32

[particles]
n = 32
dt = 0.005
t_final = 0.02
snapshots = 2
engine = "direct"

[run]
replicas = 2
"#,
        "simulate",
    );
    assert_eq!(record.files, vec!["positions.csv", "summary.csv"]);
    assert_csv_schema(&dir.join("positions.csv"), "replica,time,particle_id,x1,x2");
    assert_csv_schema(
        &dir.join("summary.csv"),
        "replica,time,moment2,moment_high,entropy,mass",
    );
    // 2 replicas x 3 snapshots x 32 particles data rows
    let rows = fs::read_to_string(dir.join("positions.csv"))
        .unwrap()
        .lines()
        .count()
        - 3;
    assert_eq!(rows, 2 * 3 * 32);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn pde_writes_trajectory_and_field() {
    let (dir, record) = run_toml(
        r#"
experiment = "pde"
seed = 2

[kernel]
kind = "biot-savart"
schedule_theta = 1.0

[mollifier]
beta = 0.015625

[particles]
n = 1
dt = 0.002
t_final = 0.05
snapshots = 5
density = "gaussian-pair"
offset = 0.7
sigma = 0.5

[grid]
n = 128
half_width = 8.0
"#,
        "pde",
    );
    assert!(record.files.contains(&"trajectory.csv".to_string()));
    assert!(record.files.contains(&"field_final.bin".to_string()));
    assert_csv_schema(
        &dir.join("trajectory.csv"),
        "time,mass,l1,lp,sup,min,entropy",
    );
    // the stored field reloads through the documented binary layout
    let bytes = fs::read(dir.join("field_final.bin")).unwrap();
    let field = moderate_core::GridField::import_binary(&mut bytes.as_slice()).unwrap();
    assert!((field.mass() - 1.0).abs() < 1e-9);
    let residual = record
        .summary
        .get("mild_residual_l1")
        .unwrap()
        .as_f64()
        .unwrap();
    assert!(residual < 1e-3, "residual {residual}");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn noise_check_compares_oracle_and_empirical() {
    let (dir, record) = run_toml(
        r#"
experiment = "noise-check"
seed = 4

[kernel]
kind = "biot-savart"
epsilon = 0.5

[mollifier]
beta = 0.015625

[noise]
coupled = false
n_scale = 0.0
modes = 64

[particles]
n = 1

[run]
replicas = 2000
"#,
        "noise-check",
    );
    assert_csv_schema(
        &dir.join("covariance.csv"),
        "z1,z2,q11,q12,q21,q22,e11,e12,e21,e22,se11,se12,se21,se22",
    );
    let max_dev = record
        .summary
        .get("max_sigma_deviation")
        .unwrap()
        .as_f64()
        .unwrap();
    assert!(max_dev < 5.0, "max deviation {max_dev} SE");
    let trace = record
        .summary
        .get("trace_empirical_at_zero")
        .unwrap()
        .as_f64()
        .unwrap();
    let expected = record
        .summary
        .get("trace_expected")
        .unwrap()
        .as_f64()
        .unwrap();
    assert!((trace / expected - 1.0).abs() < 0.1);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn cov_decay_writes_decreasing_table() {
    let (dir, record) = run_toml(
        r#"
experiment = "cov-decay"
seed = 6

[kernel]
kind = "biot-savart"
epsilon = 0.5

[mollifier]
beta = 0.015625

[noise]
coupled = false
modes = 32
n_scales = [0.0, 1.0]

[particles]
n = 8
dt = 0.005
engine = "direct"

[run]
replicas = 256
sample_time = 0.02
"#,
        "cov-decay",
    );
    assert_csv_schema(&dir.join("cov_decay.csv"), "n_scale,value,stderr");
    let text = fs::read_to_string(dir.join("cov_decay.csv")).unwrap();
    let values: Vec<f64> = text
        .lines()
        .skip(3)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(values[1] < values[0], "{values:?}");
    let q0 = record.summary.get("q0_ell").unwrap().as_f64().unwrap();
    assert!(values.iter().all(|v| *v <= q0));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn zconv_reports_iota() {
    let (dir, record) = run_toml(
        r#"
experiment = "zconv"
seed = 8

[kernel]
kind = "biot-savart"
epsilon = 0.6

[mollifier]
beta = 0.015625

[noise]
coupled = true
modes = 32

[particles]
n_list = [16, 64]
dt = 0.005
t_final = 0.05
snapshots = 5
engine = "direct"

[run]
replicas = 8
zeta_replicas = 32
"#,
        "zconv",
    );
    assert_csv_schema(
        &dir.join("rows.csv"),
        "n,replica,epsilon,zeta,n_scale,dist_eps,dist_exact,z_sup",
    );
    assert_csv_schema(
        &dir.join("aggregate.csv"),
        "n,beta,epsilon,zeta,n_scale,median_eps,iqr_eps,median_exact,iqr_exact,lm_exact,median_z",
    );
    assert!(record
        .summary
        .get("fitted_iota")
        .unwrap()
        .as_f64()
        .is_some());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn zeta_reports_lambda() {
    let (dir, record) = run_toml(
        r#"
experiment = "zeta"
seed = 10

[kernel]
kind = "biot-savart"
epsilon = 0.5

[mollifier]
beta = 0.015625

[particles]
n_list = [32, 128]
density = "bump"
radius = 1.5

[grid]
n = 128
half_width = 4.0

[run]
replicas = 32
"#,
        "zeta",
    );
    assert_csv_schema(&dir.join("zeta.csv"), "n,zeta");
    assert!(record
        .summary
        .get("lambda_fit")
        .unwrap()
        .as_f64()
        .unwrap()
        .is_finite());
    let _ = fs::remove_dir_all(&dir);
}
