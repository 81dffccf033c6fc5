//! The N-particle system: Euler-Maruyama with moderate-interaction drift and
//! shared environmental noise.
//!
//! Two drift engines compute the same mollified interaction
//! (K_eps * V^N * S_t^N)(X_i): an O(N^2) pairwise sum over a tabulated
//! G = K_eps * V^N, and a deposit/convolve/interpolate path through the FFT
//! grid. Both share the spectral representation of K_eps, so they agree up
//! to deposition and interpolation error.

use crate::error::{Error, Result};
use crate::fields::{mollify, InitialDensity, Vn};
use crate::grid::{GridField, GridSpec, VectorField};
use crate::noise::{sample_shared_increments, velocity_increment2, ModeIncrements, NoiseField};
use crate::pde::{snapshot_steps, KernelMode, PdeSolver};
use crate::rng::{self, Domain};

#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub positions: Vec<[f64; 2]>,
    pub time: f64,
    pub master_seed: u64,
    pub replica: u64,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// N i.i.d. draws from the initial density at time zero.
pub fn init_ensemble(
    n: u64,
    density: InitialDensity,
    master_seed: u64,
    replica: u64,
) -> ParticleEnsemble {
    let mut rng = rng::stream(master_seed, Domain::InitialPositions, replica);
    let positions = (0..n).map(|_| density.sample(&mut rng)).collect();
    ParticleEnsemble {
        positions,
        time: 0.0,
        master_seed,
        replica,
    }
}

/// (1/N) sum |X_i|^order.
pub fn empirical_moment(ens: &ParticleEnsemble, order: f64) -> f64 {
    assert!(order >= 1.0);
    let terms: Vec<f64> = ens
        .positions
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt().powf(order))
        .collect();
    crate::quad::pairwise_sum(&terms) / ens.len() as f64
}

/// Tabulated G = K_eps * V^N on the box lattice.
pub struct PairTable {
    pub g: VectorField,
    sup: f64,
}

/// Deposit-convolve-interpolate engine.
pub struct GridEngine {
    solver: PdeSolver,
    vn: Vn,
}

pub enum DriftEngine {
    /// Zero interaction (noise-only dynamics).
    Zero,
    DirectN2(PairTable),
    GridFft(Box<GridEngine>),
}

impl DriftEngine {
    pub fn direct(spec: GridSpec, kernel: KernelMode, vn: &Vn) -> Result<Self> {
        check_engine_resolution(spec, kernel, vn)?;
        // nu is irrelevant to the velocity multipliers
        let solver = PdeSolver::new(spec, 1.0, kernel)?;
        let vn_field = GridField::from_fn(spec, |p| vn.eval2(p[0], p[1]));
        let g = solver.velocity(&vn_field);
        let sup = g.sup_norm();
        Ok(DriftEngine::DirectN2(PairTable { g, sup }))
    }

    pub fn grid(spec: GridSpec, kernel: KernelMode, vn: Vn) -> Result<Self> {
        check_engine_resolution(spec, kernel, &vn)?;
        let solver = PdeSolver::new(spec, 1.0, kernel)?;
        Ok(DriftEngine::GridFft(Box::new(GridEngine { solver, vn })))
    }

    /// Max |G| of the tabulated pairwise interaction (DirectN2 only).
    pub fn sup_g(&self) -> Option<f64> {
        match self {
            DriftEngine::DirectN2(t) => Some(t.sup),
            _ => None,
        }
    }

    pub fn drift(&self, ens: &ParticleEnsemble) -> Result<Vec<[f64; 2]>> {
        match self {
            DriftEngine::Zero => Ok(vec![[0.0, 0.0]; ens.len()]),
            DriftEngine::DirectN2(table) => drift_direct(ens, table),
            DriftEngine::GridFft(engine) => drift_grid(ens, engine),
        }
    }
}

fn check_engine_resolution(spec: GridSpec, kernel: KernelMode, vn: &Vn) -> Result<()> {
    let h = spec.h();
    if vn.support_radius() < 4.0 * h {
        return Err(Error::ResolutionError {
            h,
            scale: vn.support_radius(),
            cells: 4,
        });
    }
    if let KernelMode::Regularized {
        epsilon,
        rho_radius,
        ..
    } = kernel
    {
        let ball = epsilon * rho_radius;
        if ball < 2.0 * h {
            return Err(Error::ResolutionError {
                h,
                scale: ball,
                cells: 2,
            });
        }
    }
    Ok(())
}

fn check_positions(ens: &ParticleEnsemble, half_width: f64) -> Result<()> {
    for p in &ens.positions {
        let m = p[0].abs().max(p[1].abs());
        if m > half_width {
            return Err(Error::OutOfTable {
                seen: m,
                extent: half_width,
            });
        }
    }
    Ok(())
}

/// Exact O(N^2) pairwise sum; the j = i term is (K_eps * V^N)(0) = 0 for the
/// antisymmetric kernels, and opposite pair contributions cancel exactly.
pub fn drift_direct(ens: &ParticleEnsemble, table: &PairTable) -> Result<Vec<[f64; 2]>> {
    check_positions(ens, table.g.spec.half_width)?;
    let n = ens.len();
    let weight = 1.0 / n as f64;
    let mut out = vec![[0.0, 0.0]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = [
                ens.positions[i][0] - ens.positions[j][0],
                ens.positions[i][1] - ens.positions[j][1],
            ];
            let g = table.g.interp(d);
            out[i][0] += weight * g[0];
            out[i][1] += weight * g[1];
            out[j][0] -= weight * g[0];
            out[j][1] -= weight * g[1];
        }
    }
    Ok(out)
}

/// Deposit through V^N (the mollified empirical measure), convolve with
/// K_eps spectrally, interpolate back at the particles.
pub fn drift_grid(ens: &ParticleEnsemble, engine: &GridEngine) -> Result<Vec<[f64; 2]>> {
    let spec = engine.solver.spectral().spec;
    check_positions(ens, spec.half_width)?;
    let omega = mollify(&ens.positions, &engine.vn, spec)?;
    let u = engine.solver.velocity(&omega);
    Ok(ens.positions.iter().map(|p| u.interp(*p)).collect())
}

/// One Euler-Maruyama step: X <- X + drift dt + dW(X), with the same shared
/// increments for every particle.
pub fn step(
    ens: &ParticleEnsemble,
    dt: f64,
    engine: &DriftEngine,
    noise: Option<(&NoiseField, &ModeIncrements)>,
) -> Result<ParticleEnsemble> {
    assert!(dt > 0.0);
    let drifts = engine.drift(ens)?;
    let mut positions = Vec::with_capacity(ens.len());
    for (p, d) in ens.positions.iter().zip(&drifts) {
        let dw = match noise {
            Some((field, incs)) => velocity_increment2(field, incs, *p),
            None => [0.0, 0.0],
        };
        let q = [p[0] + d[0] * dt + dw[0], p[1] + d[1] * dt + dw[1]];
        if !(q[0].is_finite() && q[1].is_finite()) {
            return Err(Error::NonFinite { step: 0 });
        }
        positions.push(q);
    }
    Ok(ParticleEnsemble {
        positions,
        time: ens.time + dt,
        master_seed: ens.master_seed,
        replica: ens.replica,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EngineKind {
    Zero,
    Direct,
    Grid,
}

#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub alpha: f64,
    pub n_scale: f64,
    pub modes: usize,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_particles: u64,
    pub density: InitialDensity,
    pub kernel: KernelMode,
    pub engine: EngineKind,
    pub vn: Vn,
    pub noise: Option<NoiseSpec>,
    pub grid: GridSpec,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_times: Vec<f64>,
    pub master_seed: u64,
    pub replica: u64,
}

/// Deterministic trajectory for (config, seed): snapshots at the requested
/// times. Step failures carry the step index.
pub fn simulate(cfg: &SimConfig) -> Result<Vec<(f64, ParticleEnsemble)>> {
    if cfg.dt <= 0.0 || cfg.t_final < 0.0 {
        return Err(Error::InvalidConfig(
            "dt must be positive and T nonnegative".into(),
        ));
    }
    let steps = (cfg.t_final / cfg.dt).round() as usize;
    if ((steps as f64 * cfg.dt) - cfg.t_final).abs() > 1e-9 * cfg.t_final.max(1.0) {
        return Err(Error::InvalidConfig(
            "t_final must be a multiple of dt".into(),
        ));
    }
    let snap_steps = snapshot_steps(&cfg.snapshot_times, cfg.dt, steps)?;

    let engine = match cfg.engine {
        EngineKind::Zero => DriftEngine::Zero,
        EngineKind::Direct => DriftEngine::direct(cfg.grid, cfg.kernel, &cfg.vn)?,
        EngineKind::Grid => DriftEngine::grid(cfg.grid, cfg.kernel, cfg.vn)?,
    };
    let noise = match cfg.noise {
        Some(spec) => Some(crate::noise::build_noise(
            2,
            spec.alpha,
            spec.n_scale,
            spec.modes,
            cfg.master_seed,
            cfg.replica,
        )?),
        None => None,
    };
    let mut inc_rng = rng::stream(cfg.master_seed, Domain::NoiseIncrements, cfg.replica);

    let mut ens = init_ensemble(cfg.n_particles, cfg.density, cfg.master_seed, cfg.replica);
    let mut snapshots = Vec::new();
    if snap_steps.contains(&0) {
        snapshots.push((0.0, ens.clone()));
    }
    for k in 1..=steps {
        let incs = noise
            .as_ref()
            .map(|field| sample_shared_increments(field, cfg.dt, &mut inc_rng));
        let pair = noise.as_ref().zip(incs.as_ref());
        ens = step(&ens, cfg.dt, &engine, pair).map_err(|e| Error::AtStep {
            step: k,
            source: Box::new(e),
        })?;
        if snap_steps.contains(&k) {
            snapshots.push((k as f64 * cfg.dt, ens.clone()));
        }
    }
    Ok(snapshots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelKind;
    use crate::mollifiers::{ModerateScaling, Mollifier};
    use std::f64::consts::PI;

    fn vn_for(n: u64) -> Vn {
        let moll = Mollifier::standard(2, 1.0);
        let scaling = ModerateScaling::new(1.0 / 64.0, n, 4.0, 4.0, 2, true).unwrap();
        Vn::new(moll, scaling)
    }

    fn reg_kernel(eps: f64) -> KernelMode {
        KernelMode::Regularized {
            kind: KernelKind::BiotSavart,
            epsilon: eps,
            rho_radius: 1.0,
        }
    }

    #[test]
    fn init_matches_gaussian_statistics() {
        let n = 100_000u64;
        let ens = init_ensemble(n, InitialDensity::Gaussian { sigma: 1.0 }, 42, 0);
        let nf = n as f64;
        let mean: [f64; 2] = ens
            .positions
            .iter()
            .fold([0.0, 0.0], |m, p| [m[0] + p[0] / nf, m[1] + p[1] / nf]);
        assert!(mean[0].abs() < 3.0 / nf.sqrt());
        assert!(mean[1].abs() < 3.0 / nf.sqrt());
        let cov_xx: f64 = ens.positions.iter().map(|p| p[0] * p[0]).sum::<f64>() / nf;
        let cov_xy: f64 = ens.positions.iter().map(|p| p[0] * p[1]).sum::<f64>() / nf;
        assert!((cov_xx - 1.0).abs() < 0.05);
        assert!(cov_xy.abs() < 0.05);

        // moment of order m(d+1) = 12: E|X|^12 = 2^6 6! for the standard
        // 2D Gaussian; the spread of the estimator is dominated by E|X|^24
        let m12 = empirical_moment(&ens, 12.0);
        let want = 64.0 * 720.0;
        let var24 = 4096.0 * 479_001_600.0 - want * want;
        let se = (var24 / nf).sqrt();
        assert!((m12 - want).abs() < 3.0 * se, "{m12} vs {want} (se {se})");
        // trivial cases
        let zeros = ParticleEnsemble {
            positions: vec![[0.0, 0.0]; 8],
            time: 0.0,
            master_seed: 0,
            replica: 0,
        };
        assert_eq!(empirical_moment(&zeros, 2.0), 0.0);
        assert!((empirical_moment(&ens, 2.0) - 2.0).abs() < 3.0 * (20.0f64 / nf).sqrt());
    }

    #[test]
    fn symmetric_pair_has_opposite_drifts() {
        let spec = GridSpec::new(128, 8.0).unwrap();
        let vn = vn_for(2);
        let engine = DriftEngine::direct(spec, reg_kernel(0.4), &vn).unwrap();
        let ens = ParticleEnsemble {
            positions: vec![[1.5, 0.3], [-1.5, -0.3]],
            time: 0.0,
            master_seed: 0,
            replica: 0,
        };
        let d = engine.drift(&ens).unwrap();
        assert_eq!(d[0][0], -d[1][0]);
        assert_eq!(d[0][1], -d[1][1]);
        // single particle: pure self-interaction vanishes
        let single = ParticleEnsemble {
            positions: vec![[0.7, -0.2]],
            time: 0.0,
            master_seed: 0,
            replica: 0,
        };
        assert_eq!(engine.drift(&single).unwrap()[0], [0.0, 0.0]);
    }

    #[test]
    fn center_of_mass_drift_cancels() {
        let spec = GridSpec::new(128, 8.0).unwrap();
        let vn = vn_for(32);
        let engine = DriftEngine::direct(spec, reg_kernel(0.3), &vn).unwrap();
        let ens = init_ensemble(32, InitialDensity::Gaussian { sigma: 1.0 }, 9, 0);
        let d = engine.drift(&ens).unwrap();
        let sum = d.iter().fold([0.0, 0.0], |m, v| [m[0] + v[0], m[1] + v[1]]);
        let scale = d
            .iter()
            .fold(0.0f64, |m, v| m.max(v[0].abs().max(v[1].abs())));
        assert!(
            sum[0].abs() <= 1e-13 * (32.0 * scale).max(1e-300),
            "{sum:?}"
        );
        assert!(
            sum[1].abs() <= 1e-13 * (32.0 * scale).max(1e-300),
            "{sum:?}"
        );
    }

    #[test]
    fn engines_agree_on_random_configurations() {
        let spec = GridSpec::new(256, 8.0).unwrap();
        for (seed, n) in [(1u64, 16u64), (2, 64), (3, 128)] {
            let vn = vn_for(n);
            let kernel = reg_kernel(0.3);
            let direct = DriftEngine::direct(spec, kernel, &vn).unwrap();
            let grid = DriftEngine::grid(spec, kernel, vn).unwrap();
            let ens = init_ensemble(n, InitialDensity::Gaussian { sigma: 1.0 }, seed, 0);
            let a = direct.drift(&ens).unwrap();
            let b = grid.drift(&ens).unwrap();
            let sup_g = direct.sup_g().unwrap();
            let max_err = a
                .iter()
                .zip(&b)
                .fold(0.0f64, |m, (x, y)| m.max((x[0] - y[0]).hypot(x[1] - y[1])));
            assert!(
                max_err <= 1e-3 * sup_g,
                "n={n}: {max_err:e} vs sup {sup_g:e}"
            );
        }
    }

    #[test]
    fn ring_drift_is_tangential() {
        let spec = GridSpec::new(256, 8.0).unwrap();
        let n = 64u64;
        let vn = vn_for(n);
        let engine = DriftEngine::grid(spec, reg_kernel(0.3), vn).unwrap();
        let radius = 2.0;
        let positions: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / n as f64;
                [radius * a.cos(), radius * a.sin()]
            })
            .collect();
        let ens = ParticleEnsemble {
            positions,
            time: 0.0,
            master_seed: 0,
            replica: 0,
        };
        let d = engine.drift(&ens).unwrap();
        let direct = DriftEngine::direct(spec, reg_kernel(0.3), &vn_for(n)).unwrap();
        let d2 = direct.drift(&ens).unwrap();
        let speed = d.iter().fold(0.0f64, |m, v| m.max(v[0].hypot(v[1])));
        for (k, v) in d.iter().enumerate() {
            let p = ens.positions[k];
            let radial = (v[0] * p[0] + v[1] * p[1]) / radius;
            assert!(
                radial.abs() < 2e-3 * speed,
                "radial {radial:e} speed {speed:e}"
            );
            // cross-check engines on the ring
            let err = (v[0] - d2[k][0]).hypot(v[1] - d2[k][1]);
            assert!(err < 1e-3 * speed.max(direct.sup_g().unwrap()));
        }
    }

    #[test]
    fn zero_kernel_zero_noise_is_identity() {
        let ens = init_ensemble(16, InitialDensity::Gaussian { sigma: 1.0 }, 4, 0);
        let stepped = step(&ens, 1e-3, &DriftEngine::Zero, None).unwrap();
        assert_eq!(ens.positions, stepped.positions);
        assert!(stepped.time > 0.0);
    }

    #[test]
    fn coincident_particles_stay_together_under_noise() {
        let field = crate::noise::build_noise(2, 4.0, 0.5, 64, 77, 0).unwrap();
        let mut rng = rng::stream(77, Domain::NoiseIncrements, 0);
        let mut ens = ParticleEnsemble {
            positions: vec![[0.4, -0.1], [0.4, -0.1], [2.0, 1.0]],
            time: 0.0,
            master_seed: 77,
            replica: 0,
        };
        for _ in 0..50 {
            let incs = sample_shared_increments(&field, 1e-3, &mut rng);
            ens = step(&ens, 1e-3, &DriftEngine::Zero, Some((&field, &incs))).unwrap();
            assert_eq!(ens.positions[0], ens.positions[1]);
        }
        assert_ne!(ens.positions[0], [0.4, -0.1]);
    }

    #[test]
    fn vortex_pair_rotates_at_the_expected_rate() {
        // two like-signed vortices of strength 1/2 at separation s rotate
        // about their midpoint; on the periodic box the uniform neutralizing
        // background adds a known clockwise correction
        let spec = GridSpec::new(256, 8.0).unwrap();
        let n = 2u64;
        let vn = vn_for(n);
        let eps = 0.25;
        let engine = DriftEngine::direct(spec, reg_kernel(eps), &vn).unwrap();
        let sep = 2.0f64;
        let mut ens = ParticleEnsemble {
            positions: vec![[sep / 2.0, 0.0], [-sep / 2.0, 0.0]],
            time: 0.0,
            master_seed: 0,
            replica: 0,
        };
        let dt = 1e-3;
        let steps = 1000;
        for _ in 0..steps {
            ens = step(&ens, dt, &engine, None).unwrap();
        }
        let d = [
            ens.positions[0][0] - ens.positions[1][0],
            ens.positions[0][1] - ens.positions[1][1],
        ];
        let dist = d[0].hypot(d[1]);
        assert!(
            (dist - sep).abs() < 1e-3 * sep,
            "distance drift {}",
            dist - sep
        );
        // angular velocity: Omega = (|K(s)| - (w_bar/2) s) / s
        let w_bar = 1.0 / (2.0 * spec.half_width).powi(2);
        let omega = (1.0 / (2.0 * PI * sep) - 0.5 * w_bar * sep) / sep;
        let angle = d[1].atan2(d[0]);
        let want = omega * dt * steps as f64;
        assert!(
            (angle - want).abs() < 0.01 * want,
            "angle {angle} vs {want}"
        );
    }

    #[test]
    fn simulate_is_deterministic_and_t0_is_initial() {
        let spec = GridSpec::new(128, 8.0).unwrap();
        let cfg = SimConfig {
            n_particles: 32,
            density: InitialDensity::Gaussian { sigma: 1.0 },
            kernel: reg_kernel(0.4),
            engine: EngineKind::Direct,
            vn: vn_for(32),
            noise: Some(NoiseSpec {
                alpha: 4.0,
                n_scale: 1.0,
                modes: 32,
            }),
            grid: spec,
            dt: 1e-3,
            t_final: 0.02,
            snapshot_times: vec![0.0, 0.01, 0.02],
            master_seed: 5,
            replica: 3,
        };
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a.len(), 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.0, y.0);
            assert_eq!(x.1.positions, y.1.positions);
        }
        // T = 0: single snapshot equal to the initial ensemble
        let cfg0 = SimConfig {
            t_final: 0.0,
            snapshot_times: vec![0.0],
            ..cfg.clone()
        };
        let snaps = simulate(&cfg0).unwrap();
        assert_eq!(snaps.len(), 1);
        let init = init_ensemble(32, InitialDensity::Gaussian { sigma: 1.0 }, 5, 3);
        assert_eq!(snaps[0].1.positions, init.positions);
    }

    #[test]
    fn dt_refinement_stays_within_statistical_error() {
        // halving dt moves the final mollified-measure distance to the heat
        // reference by less than the replica spread
        let spec = GridSpec::new(128, 8.0).unwrap();
        let nu = crate::noise::nu_theoretical(2, 4.0).unwrap();
        let reference = crate::pde::heat_propagate(
            &InitialDensity::Gaussian { sigma: 1.0 }.grid_field(spec),
            0.1,
            nu,
        );
        let dist_at = |dt: f64, replica: u64| -> f64 {
            let vn = vn_for(64);
            let cfg = SimConfig {
                n_particles: 64,
                density: InitialDensity::Gaussian { sigma: 1.0 },
                kernel: reg_kernel(0.5),
                engine: EngineKind::Direct,
                vn,
                noise: Some(NoiseSpec {
                    alpha: 4.0,
                    n_scale: (64f64).ln(),
                    modes: 64,
                }),
                grid: spec,
                dt,
                t_final: 0.1,
                snapshot_times: vec![0.1],
                master_seed: 61,
                replica,
            };
            let snaps = simulate(&cfg).unwrap();
            crate::fields::mollify(&snaps[0].1.positions, &vn, spec)
                .unwrap()
                .sub(&reference)
                .l1lp_norm(4.0)
        };
        let reps = 6;
        let coarse: Vec<f64> = (0..reps).map(|r| dist_at(2e-3, r)).collect();
        let fine: Vec<f64> = (0..reps).map(|r| dist_at(1e-3, r)).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let spread = {
            let m = mean(&coarse);
            (coarse.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (reps - 1) as f64).sqrt()
        };
        let shift = (mean(&coarse) - mean(&fine)).abs();
        assert!(shift < spread, "dt shift {shift} vs spread {spread}");
    }

    #[test]
    fn moment_stays_bounded_along_noisy_run() {
        let spec = GridSpec::new(128, 8.0).unwrap();
        let cfg = SimConfig {
            n_particles: 64,
            density: InitialDensity::Gaussian { sigma: 1.0 },
            kernel: reg_kernel(0.4),
            engine: EngineKind::Direct,
            vn: vn_for(64),
            noise: Some(NoiseSpec {
                alpha: 4.0,
                n_scale: 2.0,
                modes: 64,
            }),
            grid: spec,
            dt: 1e-3,
            t_final: 0.2,
            snapshot_times: (0..=10).map(|k| 0.02 * k as f64).collect(),
            master_seed: 8,
            replica: 0,
        };
        let snaps = simulate(&cfg).unwrap();
        let m0 = empirical_moment(&snaps[0].1, 12.0);
        let running_max = snaps
            .iter()
            .map(|(_, e)| empirical_moment(e, 12.0))
            .fold(0.0f64, f64::max);
        assert!(running_max.is_finite());
        assert!(
            running_max < 50.0 * m0.max(1.0),
            "max {running_max} vs initial {m0}"
        );
    }
}
