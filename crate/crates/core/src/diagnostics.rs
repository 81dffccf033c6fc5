//! The quantitative mechanisms behind the scaling limit, packaged as
//! runnable experiments: the epsilon(N) coupling schedule, the convergence
//! sweep of mollified empirical measures against the limit equation, the
//! decay of force covariance between two tagged particles, the stochastic
//! convolution residual of the mild equation, entropy trends, and the
//! Mittag-Leffler bound used by the generalized Gronwall estimate.

use crate::error::{Error, Result};
use crate::fields::{mollify, zeta_single, InitialDensity, Vn};
use crate::grid::{GridField, GridSpec};
use crate::kernels::KernelKind;
use crate::mollifiers::{ModerateScaling, Mollifier};
use crate::noise::{nu_theoretical, CovarianceProfile};
use crate::particles::{simulate, EngineKind, NoiseSpec, SimConfig};
use crate::pde::{solve, trapezoid_weight, KernelMode, PdeConfig, PdeSolver};
use crate::quad::{integrate_adaptive, iqr, loglog_slope, median, pairwise_sum, GaussRule};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use std::time::Instant;

// ---------------------------------------------------------------------------
// epsilon(N) schedule
// ---------------------------------------------------------------------------

/// epsilon(N) = [min(theta log N, -theta log zeta_N)]^{-p'/(2d)}.
pub fn epsilon_schedule(n: u64, zeta_n: f64, p: f64, d: usize, theta: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidConfig("schedule needs N >= 2".into()));
    }
    if !(zeta_n > 0.0 && zeta_n < 1.0) {
        return Err(Error::InvalidZeta(zeta_n));
    }
    if theta <= 0.0 || p <= 1.0 {
        return Err(Error::InvalidConfig(
            "schedule needs theta > 0 and p > 1".into(),
        ));
    }
    let p_prime = p / (p - 1.0);
    let arg = (theta * (n as f64).ln()).min(-theta * zeta_n.ln());
    Ok(arg.powf(-p_prime / (2.0 * d as f64)))
}

// ---------------------------------------------------------------------------
// Mittag-Leffler E_{1/2}
// ---------------------------------------------------------------------------

/// E_{1/2}(z) = e^{z^2} (1 + 2/sqrt(pi) INT_0^z e^{-t^2} dt), evaluated by
/// adaptive quadrature of the error-function integral.
pub fn mittag_leffler_half(z: f64) -> f64 {
    assert!(z >= 0.0);
    let rule = GaussRule::new(32);
    let (erf_int, _) = integrate_adaptive(&rule, 0.0, z, 1e-14, 12, |t| (-t * t).exp());
    let value = (z * z).exp() * (1.0 + 2.0 / std::f64::consts::PI.sqrt() * erf_int);
    debug_assert!(value <= 2.0 * (z * z).exp() * (1.0 + 1e-12));
    value
}

/// Series definition sum_k z^k / Gamma(k/2 + 1) truncated after `terms`
/// terms; the half-integer Gamma values come from the exact recurrence.
pub fn mittag_leffler_series(z: f64, terms: usize) -> f64 {
    let mut acc = 0.0;
    // Gamma(k/2 + 1) tracked incrementally: g_k = Gamma(k/2 + 1)
    let mut even = 1.0; // Gamma(1), Gamma(2), ... for even k
    let mut odd = 0.5 * std::f64::consts::PI.sqrt(); // Gamma(3/2), ... for odd k
    let mut zp = 1.0;
    for k in 0..terms {
        let gamma = if k % 2 == 0 { even } else { odd };
        acc += zp / gamma;
        zp *= z;
        if k % 2 == 0 {
            even *= k as f64 / 2.0 + 1.0;
        } else {
            odd *= k as f64 / 2.0 + 1.0;
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// Stochastic convolution residual
// ---------------------------------------------------------------------------

/// Z^N_t estimated by rearranging the mild equation on stored snapshots:
/// Z_t = e^{tA} w_0 - Duhamel(t) - w_t, with the Duhamel integral taken by
/// trapezoid over the snapshot grid. `mild_rhs` stores e^{tA} w_0 - Duhamel
/// so that adding Z back is a pure rearrangement.
pub struct ZEstimate {
    pub times: Vec<f64>,
    pub z_l1lp: Vec<f64>,
    pub sup: f64,
    pub z_fields: Vec<GridField>,
    pub mild_rhs: Vec<GridField>,
}

pub fn stochastic_convolution_estimate(
    snapshots: &[(f64, GridField)],
    solver: &PdeSolver,
    nu: f64,
    p: f64,
    check_density: bool,
) -> Result<ZEstimate> {
    if snapshots.len() < 3 {
        return Err(Error::InvalidConfig(
            "need at least three snapshots for Z".into(),
        ));
    }
    let est = z_estimate_inner(snapshots, solver, nu, p);
    if check_density {
        // recompute on every other snapshot; a large shift means the
        // Duhamel quadrature is under-resolved
        let coarse: Vec<(f64, GridField)> = snapshots
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 2 == 0 || *i == snapshots.len() - 1)
            .map(|(_, s)| (s.0, s.1.clone()))
            .collect();
        let coarse_est = z_estimate_inner(&coarse, solver, nu, p);
        let change = 100.0 * (coarse_est.sup - est.sup).abs() / est.sup.max(1e-300);
        if change > 20.0 {
            return Err(Error::QuadratureTooCoarse { change });
        }
    }
    Ok(est)
}

fn z_estimate_inner(
    snapshots: &[(f64, GridField)],
    solver: &PdeSolver,
    nu: f64,
    p: f64,
) -> ZEstimate {
    let sp = solver.spectral();
    let n2 = sp.spec.n * sp.spec.n;
    let times: Vec<f64> = snapshots.iter().map(|s| s.0).collect();

    // spectral nonlinear fluxes F_s = dealias(F[(K_eps * w_s) w_s])
    let fluxes: Vec<(Vec<Complex64>, Vec<Complex64>)> = snapshots
        .par_iter()
        .map(|(_, f)| {
            let u = solver.velocity(f);
            let gx: Vec<f64> = u.x.iter().zip(&f.values).map(|(a, b)| a * b).collect();
            let gy: Vec<f64> = u.y.iter().zip(&f.values).map(|(a, b)| a * b).collect();
            let mut gx_hat = sp.forward(&gx);
            let mut gy_hat = sp.forward(&gy);
            sp.dealias(&mut gx_hat);
            sp.dealias(&mut gy_hat);
            (gx_hat, gy_hat)
        })
        .collect();
    let divs: Vec<Vec<Complex64>> = fluxes
        .iter()
        .map(|(gx, gy)| sp.divergence(gx, gy))
        .collect();
    let w0_hat = sp.forward(&snapshots[0].1.values);

    let mut z_fields = Vec::with_capacity(times.len());
    let mut mild_rhs = Vec::with_capacity(times.len());
    let mut z_l1lp = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let sub = &times[..=k];
        let mut duhamel = vec![Complex64::default(); n2];
        for (idx, &s) in sub.iter().enumerate() {
            let w = trapezoid_weight(sub, idx);
            if w == 0.0 {
                continue;
            }
            let mut term = divs[idx].clone();
            sp.apply_heat(&mut term, nu, t - s);
            for i in 0..n2 {
                duhamel[i] += w * term[i];
            }
        }
        let mut heated = w0_hat.clone();
        sp.apply_heat(&mut heated, nu, t);
        let rhs_hat: Vec<Complex64> = (0..n2).map(|i| heated[i] - duhamel[i]).collect();
        let rhs = GridField {
            spec: sp.spec,
            values: sp.inverse(rhs_hat),
        };
        let z = rhs.sub(&snapshots[k].1);
        z_l1lp.push(z.l1lp_norm(p));
        z_fields.push(z);
        mild_rhs.push(rhs);
    }
    let sup = z_l1lp.iter().fold(0.0f64, |m, v| m.max(*v));
    ZEstimate {
        times,
        z_l1lp,
        sup,
        z_fields,
        mild_rhs,
    }
}

// ---------------------------------------------------------------------------
// Entropy trend
// ---------------------------------------------------------------------------

pub struct EntropyTrend {
    pub times: Vec<f64>,
    pub entropy: Vec<f64>,
    pub initial_entropy: f64,
    pub bounded_above: bool,
}

/// Plug-in entropy along a field trajectory, checked against the initial
/// entropy plus a tolerance.
pub fn entropy_trend(
    snapshots: &[(f64, GridField)],
    initial_entropy: f64,
    tol: f64,
) -> EntropyTrend {
    let times: Vec<f64> = snapshots.iter().map(|s| s.0).collect();
    let entropy: Vec<f64> = snapshots.iter().map(|s| s.1.entropy_plugin()).collect();
    let bounded_above = entropy.iter().all(|&h| h <= initial_entropy + tol);
    EntropyTrend {
        times,
        entropy,
        initial_entropy,
        bounded_above,
    }
}

// ---------------------------------------------------------------------------
// Force-covariance decay
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CovDecayConfig {
    pub alpha: f64,
    pub ell: f64,
    pub n_scales: Vec<f64>,
    pub replicas: usize,
    pub n_particles: u64,
    pub density: InitialDensity,
    pub kernel: KernelMode,
    pub engine: EngineKind,
    pub moll: Mollifier,
    pub beta: f64,
    pub m: f64,
    pub p: f64,
    pub modes: usize,
    pub grid: GridSpec,
    pub dt: f64,
    pub sample_time: f64,
    pub master_seed: u64,
    /// noise off: i.i.d. initial positions evaluated directly
    pub noise_on: bool,
}

#[derive(Debug, Clone)]
pub struct CovDecayRow {
    pub n_scale: f64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct CovDecayReport {
    pub rows: Vec<CovDecayRow>,
    /// |Q(0)|^ell = (2 nu sqrt(d))^ell, the coincident-particle value
    pub q0_ell: f64,
    pub wall_secs: f64,
}

/// Monte Carlo estimate of E |Q_{n}(X^1_s - X^2_s)|^ell across noise scales.
pub fn force_covariance_decay(cfg: &CovDecayConfig) -> Result<CovDecayReport> {
    if cfg.ell < 2.0 {
        return Err(Error::InvalidConfig("moment order ell must be >= 2".into()));
    }
    if cfg.replicas < 256 {
        return Err(Error::InvalidConfig(format!(
            "covariance decay needs >= 256 replicas, got {}",
            cfg.replicas
        )));
    }
    if cfg.n_particles < 2 {
        return Err(Error::InvalidConfig("need two tagged particles".into()));
    }
    let start = Instant::now();
    let nu = nu_theoretical(2, cfg.alpha)?;
    let q0_ell = (2.0 * nu * 2.0f64.sqrt()).powf(cfg.ell);
    let rho_max = 2.0 * 2.0f64.sqrt() * cfg.grid.half_width;
    let scaling = ModerateScaling::new(cfg.beta, cfg.n_particles, cfg.m, cfg.p, 2, false)?;
    let vn = Vn::new(cfg.moll, scaling);

    let mut rows = Vec::with_capacity(cfg.n_scales.len());
    for (si, &n_scale) in cfg.n_scales.iter().enumerate() {
        let profile = CovarianceProfile::build(2, cfg.alpha, n_scale, rho_max, 4096)?;
        let samples: Vec<f64> = (0..cfg.replicas as u64)
            .into_par_iter()
            .map(|rep| {
                let stream_id = ((si as u64) << 32) | rep;
                let separation = if cfg.noise_on && cfg.sample_time > 0.0 {
                    let sim = SimConfig {
                        n_particles: cfg.n_particles,
                        density: cfg.density,
                        kernel: cfg.kernel,
                        engine: cfg.engine,
                        vn,
                        noise: Some(NoiseSpec {
                            alpha: cfg.alpha,
                            n_scale,
                            modes: cfg.modes,
                        }),
                        grid: cfg.grid,
                        dt: cfg.dt,
                        t_final: cfg.sample_time,
                        snapshot_times: vec![cfg.sample_time],
                        master_seed: cfg.master_seed,
                        replica: stream_id,
                    };
                    let snaps = simulate(&sim)?;
                    let ens = &snaps.last().unwrap().1;
                    [
                        ens.positions[0][0] - ens.positions[1][0],
                        ens.positions[0][1] - ens.positions[1][1],
                    ]
                } else {
                    let ens = crate::particles::init_ensemble(
                        cfg.n_particles,
                        cfg.density,
                        cfg.master_seed,
                        stream_id,
                    );
                    [
                        ens.positions[0][0] - ens.positions[1][0],
                        ens.positions[0][1] - ens.positions[1][1],
                    ]
                };
                let rho = separation[0].hypot(separation[1]);
                Ok(profile.frobenius(rho).powf(cfg.ell))
            })
            .collect::<Result<_>>()?;
        let n = samples.len() as f64;
        let mean = pairwise_sum(&samples) / n;
        let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        rows.push(CovDecayRow {
            n_scale,
            value: mean,
            stderr: (var / n).sqrt(),
        });
    }
    Ok(CovDecayReport {
        rows,
        q0_ell,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// Convergence sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum EpsilonRule {
    /// epsilon from the coupling schedule with the given theta.
    Schedule { theta: f64 },
    /// fixed epsilon for every N (flagged in outputs).
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub n_list: Vec<u64>,
    pub replicas: usize,
    pub density: InitialDensity,
    pub kernel_kind: KernelKind,
    pub moll: Mollifier,
    pub rho_radius: f64,
    pub beta: f64,
    pub m: f64,
    pub p: f64,
    pub alpha: f64,
    /// noise cutoff scale: coupled (n_scale = log N) or fixed
    pub coupled_noise: bool,
    pub n_scale_fixed: f64,
    pub noise_on: bool,
    pub modes: usize,
    pub epsilon: EpsilonRule,
    pub grid: GridSpec,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_count: usize,
    pub engine: EngineKind,
    pub zeta_replicas: usize,
    pub estimate_z: bool,
    pub master_seed: u64,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub n: u64,
    pub beta: f64,
    pub epsilon: f64,
    pub zeta: f64,
    pub n_scale: f64,
    pub dist_eps: Vec<f64>,
    pub dist_exact: Vec<f64>,
    pub z_sup: Vec<f64>,
    pub median_eps: f64,
    pub iqr_eps: f64,
    pub median_exact: f64,
    pub iqr_exact: f64,
    /// empirical L^m(Omega) norm of the sup-distance to the exact solution
    pub lm_exact: f64,
    pub median_z: f64,
    pub wall_secs: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<SweepRow>,
    /// log-log slope of the median exact distance against N
    pub fitted_exponent: f64,
    /// log-log slope of the median Z sup against N (when estimated)
    pub fitted_iota: Option<f64>,
    /// per-row failures (row index, message); failed rows are excluded
    pub failures: Vec<(usize, String)>,
}

pub fn convergence_sweep(cfg: &SweepConfig) -> Result<ConvergenceReport> {
    if cfg.replicas < 8 || cfg.n_list.len() < 2 {
        return Err(Error::InvalidConfig(
            "sweep needs replicas >= 8 and >= 2 values of N".into(),
        ));
    }
    if cfg.n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(
            "sweep N list must be strictly increasing".into(),
        ));
    }
    let nu = if cfg.noise_on {
        nu_theoretical(2, cfg.alpha)?
    } else {
        0.0
    };
    let snapshot_times: Vec<f64> = (0..=cfg.snapshot_count)
        .map(|k| cfg.t_final * k as f64 / cfg.snapshot_count as f64)
        .collect();
    let omega0 = cfg.density.grid_field(cfg.grid);

    // reference solution with the exact kernel, shared by all rows
    let exact_traj = solve(
        &omega0,
        &PdeConfig {
            nu,
            kernel: KernelMode::Exact(cfg.kernel_kind),
            grid: cfg.grid,
            dt: cfg.dt,
            t_final: cfg.t_final,
            snapshot_times: snapshot_times.clone(),
            blow_up_factor: 1e6,
        },
    )?;
    if let Some(t) = exact_traj.blew_up_at {
        return Err(Error::BlowUp {
            time: t,
            sup: f64::NAN,
        });
    }

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (row_idx, &n) in cfg.n_list.iter().enumerate() {
        let start = Instant::now();
        match sweep_row(
            cfg,
            n,
            row_idx,
            nu,
            &snapshot_times,
            &omega0,
            &exact_traj.fields,
        ) {
            Ok(mut row) => {
                row.wall_secs = start.elapsed().as_secs_f64();
                rows.push(row);
            }
            Err(e) => failures.push((row_idx, e.to_string())),
        }
    }
    if rows.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "sweep produced {} usable rows; failures: {failures:?}",
            rows.len()
        )));
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let med: Vec<f64> = rows.iter().map(|r| r.median_exact).collect();
    let fitted_exponent = loglog_slope(&ns, &med);
    let fitted_iota = if cfg.estimate_z {
        let zs: Vec<f64> = rows.iter().map(|r| r.median_z).collect();
        Some(-loglog_slope(&ns, &zs))
    } else {
        None
    };
    Ok(ConvergenceReport {
        rows,
        fitted_exponent,
        fitted_iota,
        failures,
    })
}

#[allow(clippy::too_many_arguments)]
fn sweep_row(
    cfg: &SweepConfig,
    n: u64,
    row_idx: usize,
    nu: f64,
    snapshot_times: &[f64],
    omega0: &GridField,
    exact_fields: &[GridField],
) -> Result<SweepRow> {
    let zeta = zeta_single(
        cfg.density,
        cfg.moll,
        cfg.beta,
        cfg.m,
        cfg.p,
        cfg.grid,
        n,
        cfg.zeta_replicas,
        cfg.master_seed,
        (row_idx as u64) << 32,
    )?;
    let epsilon = match cfg.epsilon {
        EpsilonRule::Schedule { theta } => epsilon_schedule(n, zeta, cfg.p, 2, theta)?,
        EpsilonRule::Fixed(e) => e,
    };
    let n_scale = if cfg.coupled_noise {
        (n as f64).ln()
    } else {
        cfg.n_scale_fixed
    };
    let kernel = KernelMode::Regularized {
        kind: cfg.kernel_kind,
        epsilon,
        rho_radius: cfg.rho_radius,
    };

    // regularized reference at this row's epsilon
    let reg_traj = solve(
        omega0,
        &PdeConfig {
            nu,
            kernel,
            grid: cfg.grid,
            dt: cfg.dt,
            t_final: cfg.t_final,
            snapshot_times: snapshot_times.to_vec(),
            blow_up_factor: 1e6,
        },
    )?;
    if let Some(t) = reg_traj.blew_up_at {
        return Err(Error::BlowUp {
            time: t,
            sup: f64::NAN,
        });
    }

    let scaling = ModerateScaling::new(cfg.beta, n, cfg.m, cfg.p, 2, false)?;
    let vn = Vn::new(cfg.moll, scaling);
    let solver = PdeSolver::new(cfg.grid, nu, kernel)?;

    struct ReplicaOut {
        dist_eps: f64,
        dist_exact: f64,
        z_sup: f64,
    }
    let outs: Vec<ReplicaOut> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|rep| {
            let stream_id = ((row_idx as u64) << 32) | rep;
            let sim = SimConfig {
                n_particles: n,
                density: cfg.density,
                kernel,
                engine: cfg.engine,
                vn,
                noise: if cfg.noise_on {
                    Some(NoiseSpec {
                        alpha: cfg.alpha,
                        n_scale,
                        modes: cfg.modes,
                    })
                } else {
                    None
                },
                grid: cfg.grid,
                dt: cfg.dt,
                t_final: cfg.t_final,
                snapshot_times: snapshot_times.to_vec(),
                master_seed: cfg.master_seed,
                replica: stream_id,
            };
            let snaps = simulate(&sim)?;
            let mut dist_eps = 0.0f64;
            let mut dist_exact = 0.0f64;
            let mut fields = Vec::with_capacity(snaps.len());
            for (k, (t, ens)) in snaps.iter().enumerate() {
                let field = mollify(&ens.positions, &vn, cfg.grid)?;
                dist_eps = dist_eps.max(field.sub(&reg_traj.fields[k]).l1lp_norm(cfg.p));
                dist_exact = dist_exact.max(field.sub(&exact_fields[k]).l1lp_norm(cfg.p));
                fields.push((*t, field));
            }
            let z_sup = if cfg.estimate_z {
                stochastic_convolution_estimate(&fields, &solver, nu, cfg.p, false)?.sup
            } else {
                0.0
            };
            Ok(ReplicaOut {
                dist_eps,
                dist_exact,
                z_sup,
            })
        })
        .collect::<Result<_>>()?;

    let dist_eps: Vec<f64> = outs.iter().map(|o| o.dist_eps).collect();
    let dist_exact: Vec<f64> = outs.iter().map(|o| o.dist_exact).collect();
    let z_sup: Vec<f64> = outs.iter().map(|o| o.z_sup).collect();
    let m_moments: Vec<f64> = dist_exact.iter().map(|d| d.powf(cfg.m)).collect();
    let lm_exact = (pairwise_sum(&m_moments) / m_moments.len() as f64).powf(1.0 / cfg.m);
    Ok(SweepRow {
        n,
        beta: cfg.beta,
        epsilon,
        zeta,
        n_scale,
        median_eps: median(&dist_eps),
        iqr_eps: iqr(&dist_eps),
        median_exact: median(&dist_exact),
        iqr_exact: iqr(&dist_exact),
        lm_exact,
        median_z: median(&z_sup),
        dist_eps,
        dist_exact,
        z_sup,
        wall_secs: 0.0,
    })
}
