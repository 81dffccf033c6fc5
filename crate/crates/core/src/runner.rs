//! Experiment orchestration: dispatch a resolved configuration, persist
//! results as CSV plus a JSON run record, and keep everything reproducible.
//!
//! Output contract: result CSVs are deterministic byte-for-byte for a given
//! (config, seed) at any thread count; wall-clock timings live only in the
//! JSON metadata. Files are written under a `.partial` suffix and renamed on
//! success, so interrupted or failed runs leave no complete-looking output.

use crate::config::{Experiment, Resolved, SCHEMA_VERSION};
use crate::diagnostics::{
    convergence_sweep, entropy_trend, epsilon_schedule, force_covariance_decay, CovDecayConfig,
    EpsilonRule, SweepConfig,
};
use crate::error::{Error, Result};
use crate::fields::{mollify, zeta_estimate, Vn};
use crate::grid::GridField;
use crate::mollifiers::{ModerateScaling, Mollifier};
use crate::noise::{covariance_quadrature, empirical_covariance, nu_theoretical};
use crate::particles::{empirical_moment, simulate, NoiseSpec, SimConfig};
use crate::pde::{mild_residual, solve, KernelMode, PdeConfig};
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub package_version: String,
    pub experiment: String,
    pub seed: u64,
    pub status: String,
    pub error: Option<String>,
    pub files: Vec<String>,
    pub wall_secs: f64,
    pub summary: serde_json::Value,
    pub config: crate::config::RunConfig,
}

/// Run the configured experiment, writing outputs under `out_dir`.
///
/// Experiment-level failures are reported in the returned record (status
/// "failed"); only I/O-level problems surface as errors.
pub fn run(resolved: &Resolved, out_dir: &Path, threads: Option<usize>) -> Result<RunRecord> {
    fs::create_dir_all(out_dir)?;
    let start = Instant::now();
    let outcome = match threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(resolved, out_dir))
        }
        None => dispatch(resolved, out_dir),
    };
    let wall_secs = start.elapsed().as_secs_f64();
    let record = match outcome {
        Ok((files, summary)) => RunRecord {
            schema_version: SCHEMA_VERSION,
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: resolved.experiment.name().to_string(),
            seed: resolved.seed,
            status: "ok".into(),
            error: None,
            files,
            wall_secs,
            summary,
            config: resolved.echo.clone(),
        },
        Err(e) => RunRecord {
            schema_version: SCHEMA_VERSION,
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: resolved.experiment.name().to_string(),
            seed: resolved.seed,
            status: "failed".into(),
            error: Some(e.to_string()),
            files: Vec::new(),
            wall_secs,
            summary: serde_json::Value::Null,
            config: resolved.echo.clone(),
        },
    };
    // the record itself is written atomically at run end
    let json = serde_json::to_string_pretty(&record).expect("record serializes");
    atomic_write(&out_dir.join("metadata.json"), json.as_bytes())?;
    Ok(record)
}

fn dispatch(resolved: &Resolved, out_dir: &Path) -> Result<(Vec<String>, serde_json::Value)> {
    match resolved.experiment {
        Experiment::Simulate => run_simulate(resolved, out_dir),
        Experiment::Pde => run_pde(resolved, out_dir),
        Experiment::Converge => run_converge(resolved, out_dir, resolved.estimate_z),
        Experiment::Zconv => run_converge(resolved, out_dir, true),
        Experiment::NoiseCheck => run_noise_check(resolved, out_dir),
        Experiment::CovDecay => run_cov_decay(resolved, out_dir),
        Experiment::Zeta => run_zeta(resolved, out_dir),
    }
}

// ---------------------------------------------------------------------------
// output helpers
// ---------------------------------------------------------------------------

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let partial = partial_path(path);
    {
        let mut f = fs::File::create(&partial)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&partial, path)?;
    Ok(())
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

struct CsvFile {
    path: PathBuf,
    buf: Vec<u8>,
}

impl CsvFile {
    fn new(out_dir: &Path, name: &str, experiment: &str, columns: &[&str]) -> Self {
        let mut buf = Vec::new();
        let _ = writeln!(buf, "# schema={SCHEMA_VERSION}");
        let _ = writeln!(buf, "# experiment={experiment}");
        let _ = writeln!(buf, "{}", columns.join(","));
        CsvFile {
            path: out_dir.join(name),
            buf,
        }
    }

    fn row(&mut self, cells: &[String]) {
        let _ = writeln!(self.buf, "{}", cells.join(","));
    }

    /// Persist atomically; returns the file name for the run record.
    fn finish(self) -> Result<String> {
        atomic_write(&self.path, &self.buf)?;
        Ok(self
            .path
            .file_name()
            .unwrap()
            .to_string_lossy()
            .into_owned())
    }
}

fn f(v: f64) -> String {
    format!("{v}")
}

fn epsilon_for(resolved: &Resolved, n: u64) -> Result<f64> {
    match resolved.epsilon_rule {
        EpsilonRule::Fixed(e) => Ok(e),
        EpsilonRule::Schedule { theta } => {
            let zeta = crate::fields::zeta_single(
                resolved.density,
                Mollifier::standard(2, resolved.moll_support),
                resolved.beta,
                resolved.m,
                resolved.p,
                resolved.grid,
                n,
                resolved.zeta_replicas,
                resolved.seed,
                u64::MAX >> 1,
            )?;
            epsilon_schedule(n, zeta, resolved.p, 2, theta)
        }
    }
}

fn vn_for(resolved: &Resolved, n: u64) -> Result<Vn> {
    let scaling = ModerateScaling::new(resolved.beta, n, resolved.m, resolved.p, 2, false)?;
    Ok(Vn::new(
        Mollifier::standard(2, resolved.moll_support),
        scaling,
    ))
}

fn snapshot_times(resolved: &Resolved) -> Vec<f64> {
    (0..=resolved.snapshots)
        .map(|k| resolved.t_final * k as f64 / resolved.snapshots as f64)
        .collect()
}

// ---------------------------------------------------------------------------
// experiments
// ---------------------------------------------------------------------------

fn run_simulate(resolved: &Resolved, out_dir: &Path) -> Result<(Vec<String>, serde_json::Value)> {
    let n = resolved.n_list[0];
    let epsilon = epsilon_for(resolved, n)?;
    let vn = vn_for(resolved, n)?;
    let kernel = KernelMode::Regularized {
        kind: resolved.kernel_kind,
        epsilon,
        rho_radius: resolved.rho_radius,
    };
    let n_scale = if resolved.coupled {
        (n as f64).ln()
    } else {
        resolved.n_scale
    };

    let mut positions = CsvFile::new(
        out_dir,
        "positions.csv",
        "simulate",
        &["replica", "time", "particle_id", "x1", "x2"],
    );
    let mut summary = CsvFile::new(
        out_dir,
        "summary.csv",
        "simulate",
        &[
            "replica",
            "time",
            "moment2",
            "moment_high",
            "entropy",
            "mass",
        ],
    );
    let high_order = resolved.m * 3.0; // m(d+1) with d = 2
    for replica in 0..resolved.replicas as u64 {
        let cfg = SimConfig {
            n_particles: n,
            density: resolved.density,
            kernel,
            engine: resolved.engine,
            vn,
            noise: if resolved.noise_enabled {
                Some(NoiseSpec {
                    alpha: resolved.alpha,
                    n_scale,
                    modes: resolved.modes,
                })
            } else {
                None
            },
            grid: resolved.grid,
            dt: resolved.dt,
            t_final: resolved.t_final,
            snapshot_times: snapshot_times(resolved),
            master_seed: resolved.seed,
            replica,
        };
        let snaps = simulate(&cfg)?;
        for (t, ens) in &snaps {
            for (pid, p) in ens.positions.iter().enumerate() {
                positions.row(&[
                    replica.to_string(),
                    f(*t),
                    pid.to_string(),
                    f(p[0]),
                    f(p[1]),
                ]);
            }
            let field = mollify(&ens.positions, &vn, resolved.grid)?;
            summary.row(&[
                replica.to_string(),
                f(*t),
                f(empirical_moment(ens, 2.0)),
                f(empirical_moment(ens, high_order)),
                f(field.entropy_plugin()),
                f(field.mass()),
            ]);
        }
    }
    let files = vec![positions.finish()?, summary.finish()?];
    let summary_json = serde_json::json!({
        "n": n,
        "epsilon": epsilon,
        "n_scale": n_scale,
        "moment_order_high": high_order,
    });
    Ok((files, summary_json))
}

fn run_pde(resolved: &Resolved, out_dir: &Path) -> Result<(Vec<String>, serde_json::Value)> {
    let nu = if resolved.noise_enabled {
        nu_theoretical(2, resolved.alpha)?
    } else {
        0.0
    };
    let kernel = match resolved.epsilon_rule {
        EpsilonRule::Fixed(e) => KernelMode::Regularized {
            kind: resolved.kernel_kind,
            epsilon: e,
            rho_radius: resolved.rho_radius,
        },
        EpsilonRule::Schedule { .. } => KernelMode::Exact(resolved.kernel_kind),
    };
    let cfg = PdeConfig {
        nu,
        kernel,
        grid: resolved.grid,
        dt: resolved.dt,
        t_final: resolved.t_final,
        snapshot_times: snapshot_times(resolved),
        blow_up_factor: 1e6,
    };
    let omega0 = resolved.density.grid_field(resolved.grid);
    let traj = solve(&omega0, &cfg)?;
    if let Some(t) = traj.blew_up_at {
        return Err(Error::BlowUp {
            time: t,
            sup: traj.last().sup_norm(),
        });
    }

    let mut rows = CsvFile::new(
        out_dir,
        "trajectory.csv",
        "pde",
        &["time", "mass", "l1", "lp", "sup", "min", "entropy"],
    );
    for (t, field) in traj.times.iter().zip(&traj.fields) {
        rows.row(&[
            f(*t),
            f(field.mass()),
            f(field.l1_norm()),
            f(field.lp_norm(resolved.p)),
            f(field.sup_norm()),
            f(field.min_value()),
            f(field.entropy_plugin()),
        ]);
    }
    let mut files = vec![rows.finish()?];

    // final field in the documented binary layout
    let field_path = out_dir.join("field_final.bin");
    let mut buf = Vec::new();
    traj.last().export_binary(&mut buf)?;
    atomic_write(&field_path, &buf)?;
    files.push("field_final.bin".into());

    let residual = mild_residual(&traj, &cfg)?;
    let trend = entropy_trend(
        &traj
            .times
            .iter()
            .cloned()
            .zip(traj.fields.iter().cloned())
            .collect::<Vec<(f64, GridField)>>(),
        omega0.entropy_plugin(),
        0.1,
    );
    let summary = serde_json::json!({
        "nu": nu,
        "mild_residual_l1": residual,
        "entropy_bounded": trend.bounded_above,
        "final_mass": traj.last().mass(),
    });
    Ok((files, summary))
}

fn run_converge(
    resolved: &Resolved,
    out_dir: &Path,
    estimate_z: bool,
) -> Result<(Vec<String>, serde_json::Value)> {
    let sweep = SweepConfig {
        n_list: resolved.n_list.clone(),
        replicas: resolved.replicas,
        density: resolved.density,
        kernel_kind: resolved.kernel_kind,
        moll: Mollifier::standard(2, resolved.moll_support),
        rho_radius: resolved.rho_radius,
        beta: resolved.beta,
        m: resolved.m,
        p: resolved.p,
        alpha: resolved.alpha,
        coupled_noise: resolved.coupled,
        n_scale_fixed: resolved.n_scale,
        noise_on: resolved.noise_enabled,
        modes: resolved.modes,
        epsilon: resolved.epsilon_rule.clone(),
        grid: resolved.grid,
        dt: resolved.dt,
        t_final: resolved.t_final,
        snapshot_count: resolved.snapshots,
        engine: resolved.engine,
        zeta_replicas: resolved.zeta_replicas,
        estimate_z,
        master_seed: resolved.seed,
    };
    let report = convergence_sweep(&sweep)?;

    let mut rows = CsvFile::new(
        out_dir,
        "rows.csv",
        resolved.experiment.name(),
        &[
            "n",
            "replica",
            "epsilon",
            "zeta",
            "n_scale",
            "dist_eps",
            "dist_exact",
            "z_sup",
        ],
    );
    for row in &report.rows {
        for r in 0..row.dist_eps.len() {
            rows.row(&[
                row.n.to_string(),
                r.to_string(),
                f(row.epsilon),
                f(row.zeta),
                f(row.n_scale),
                f(row.dist_eps[r]),
                f(row.dist_exact[r]),
                f(row.z_sup[r]),
            ]);
        }
    }
    let mut aggregate = CsvFile::new(
        out_dir,
        "aggregate.csv",
        resolved.experiment.name(),
        &[
            "n",
            "beta",
            "epsilon",
            "zeta",
            "n_scale",
            "median_eps",
            "iqr_eps",
            "median_exact",
            "iqr_exact",
            "lm_exact",
            "median_z",
        ],
    );
    for row in &report.rows {
        aggregate.row(&[
            row.n.to_string(),
            f(row.beta),
            f(row.epsilon),
            f(row.zeta),
            f(row.n_scale),
            f(row.median_eps),
            f(row.iqr_eps),
            f(row.median_exact),
            f(row.iqr_exact),
            f(row.lm_exact),
            f(row.median_z),
        ]);
    }
    let files = vec![rows.finish()?, aggregate.finish()?];
    let summary = serde_json::json!({
        "fitted_exponent": report.fitted_exponent,
        "fitted_iota": report.fitted_iota,
        "row_wall_secs": report.rows.iter().map(|r| r.wall_secs).collect::<Vec<_>>(),
        "failures": report.failures.iter().map(|(i, m)| serde_json::json!({"row": i, "error": m})).collect::<Vec<_>>(),
    });
    Ok((files, summary))
}

fn run_noise_check(
    resolved: &Resolved,
    out_dir: &Path,
) -> Result<(Vec<String>, serde_json::Value)> {
    let nu = nu_theoretical(2, resolved.alpha)?;
    let mut rows = CsvFile::new(
        out_dir,
        "covariance.csv",
        "noise-check",
        &[
            "z1", "z2", "q11", "q12", "q21", "q22", "e11", "e12", "e21", "e22", "se11", "se12",
            "se21", "se22",
        ],
    );
    let mut points = vec![[0.0, 0.0]];
    points.extend_from_slice(&resolved.test_points);
    let mut max_sigma_dev = 0.0f64;
    let mut trace0 = 0.0;
    for (i, z) in points.iter().enumerate() {
        let oracle = covariance_quadrature(2, resolved.alpha, resolved.n_scale, z)?;
        let est = empirical_covariance(
            2,
            resolved.alpha,
            resolved.n_scale,
            resolved.modes,
            resolved.replicas,
            resolved.seed.wrapping_add(i as u64),
            z,
        )?;
        if i == 0 {
            trace0 = est.mean.trace();
        }
        let mut cells = vec![f(z[0]), f(z[1])];
        for k in 0..4 {
            cells.push(f(oracle.m[k]));
        }
        for k in 0..4 {
            cells.push(f(est.mean.m[k]));
        }
        for k in 0..4 {
            cells.push(f(est.stderr.m[k]));
        }
        rows.row(&cells);
        for k in 0..4 {
            let dev = (est.mean.m[k] - oracle.m[k]).abs() / est.stderr.m[k].max(1e-300);
            max_sigma_dev = max_sigma_dev.max(dev);
        }
    }
    let files = vec![rows.finish()?];
    let summary = serde_json::json!({
        "nu_theoretical": nu,
        "trace_empirical_at_zero": trace0,
        "trace_expected": 4.0 * nu,
        "max_sigma_deviation": max_sigma_dev,
        "replicas": resolved.replicas,
        "modes": resolved.modes,
    });
    Ok((files, summary))
}

fn run_cov_decay(resolved: &Resolved, out_dir: &Path) -> Result<(Vec<String>, serde_json::Value)> {
    let n = resolved.n_list[0];
    let epsilon = epsilon_for(resolved, n)?;
    let cfg = CovDecayConfig {
        alpha: resolved.alpha,
        ell: resolved.ell,
        n_scales: resolved.n_scales.clone(),
        replicas: resolved.replicas,
        n_particles: n,
        density: resolved.density,
        kernel: KernelMode::Regularized {
            kind: resolved.kernel_kind,
            epsilon,
            rho_radius: resolved.rho_radius,
        },
        engine: resolved.engine,
        moll: Mollifier::standard(2, resolved.moll_support),
        beta: resolved.beta,
        m: resolved.m,
        p: resolved.p,
        modes: resolved.modes,
        grid: resolved.grid,
        dt: resolved.dt,
        sample_time: resolved.sample_time,
        master_seed: resolved.seed,
        noise_on: resolved.noise_enabled,
    };
    let report = force_covariance_decay(&cfg)?;
    let mut rows = CsvFile::new(
        out_dir,
        "cov_decay.csv",
        "cov-decay",
        &["n_scale", "value", "stderr"],
    );
    for row in &report.rows {
        rows.row(&[f(row.n_scale), f(row.value), f(row.stderr)]);
    }
    let files = vec![rows.finish()?];
    let summary = serde_json::json!({
        "ell": resolved.ell,
        "q0_ell": report.q0_ell,
        "sample_time": resolved.sample_time,
        "wall_secs": report.wall_secs,
    });
    Ok((files, summary))
}

fn run_zeta(resolved: &Resolved, out_dir: &Path) -> Result<(Vec<String>, serde_json::Value)> {
    let report = zeta_estimate(
        resolved.density,
        Mollifier::standard(2, resolved.moll_support),
        resolved.beta,
        resolved.m,
        resolved.p,
        resolved.grid,
        &resolved.n_list,
        resolved.replicas.max(resolved.zeta_replicas),
        resolved.seed,
    )?;
    let mut rows = CsvFile::new(out_dir, "zeta.csv", "zeta", &["n", "zeta"]);
    for row in &report.rows {
        rows.row(&[row.n.to_string(), f(row.zeta)]);
    }
    let files = vec![rows.finish()?];
    let summary = serde_json::json!({
        "lambda_fit": report.lambda_fit,
        "constant": report.constant,
    });
    Ok((files, summary))
}
