//! Pseudo-spectral solver for the limit equation
//! d_t w + div((K * w) w) = nu Lap w on the padded periodic box, advanced in
//! the mild (Duhamel) form by one-step exponential Euler:
//!
//!   w <- e^{dt A} w - dt div e^{dt A} [(K * w) w],
//!
//! with the heat semigroup, divergence and kernel convolution all applied as
//! Fourier multipliers and the quadratic term dealiased by the 2/3 rule.

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec, Spectral, VectorField};
use crate::kernels::KernelKind;
use crate::quad::{bessel_j, unit_sphere_area, GaussRule};
use rustfft::num_complex::Complex64;

/// How the velocity kernel enters the spectral solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelMode {
    /// No advection: pure heat flow.
    None,
    /// Exact singular kernel as a Fourier multiplier.
    Exact(KernelKind),
    /// Mollified kernel: the exact symbol damped by rho_hat(eps r_rho |xi|).
    Regularized {
        kind: KernelKind,
        epsilon: f64,
        rho_radius: f64,
    },
}

/// Radial table of the unit-radius bump's Fourier transform (rho_hat(0) = 1).
#[derive(Debug, Clone)]
pub struct RhoHat {
    step: f64,
    vals: Vec<f64>,
}

impl RhoHat {
    pub fn build(s_max: f64, samples: usize) -> Self {
        let norm = crate::mollifiers::bump_normalization(2);
        let rule = GaussRule::new(32);
        let step = s_max / samples as f64;
        let vals: Vec<f64> = (0..=samples + 2)
            .map(|i| {
                let s = i as f64 * step;
                let panels = ((s / 3.0).ceil() as usize).max(2);
                let dr = 1.0 / panels as f64;
                let mut acc = 0.0;
                for p in 0..panels {
                    acc += rule.integrate(p as f64 * dr, (p + 1) as f64 * dr, |r| {
                        norm * crate::mollifiers::bump_profile(r * r) * bessel_j(0, s * r) * r
                    });
                }
                2.0 * std::f64::consts::PI * acc
            })
            .collect();
        RhoHat { step, vals }
    }

    pub fn eval(&self, s: f64) -> f64 {
        let u = s / self.step;
        let i = (u as usize).min(self.vals.len() - 2);
        let frac = u - i as f64;
        self.vals[i] * (1.0 - frac) + self.vals[i + 1] * frac
    }
}

/// Velocity multipliers u_hat = (mx, my) * w_hat for the configured kernel.
fn velocity_multipliers(
    sp: &Spectral,
    mode: KernelMode,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let n = sp.spec.n;
    let mut mx = vec![Complex64::default(); n * n];
    let mut my = vec![Complex64::default(); n * n];
    if let KernelMode::None = mode {
        return Ok((mx, my));
    }
    let (kind, damp): (KernelKind, Option<(RhoHat, f64)>) = match mode {
        KernelMode::Exact(kind) => (kind, None),
        KernelMode::Regularized {
            kind,
            epsilon,
            rho_radius,
        } => {
            let radius = epsilon * rho_radius;
            let xi_max = (2.0f64).sqrt() * sp.spec.wavenumber(n / 2).abs();
            (
                kind,
                Some((RhoHat::build((radius * xi_max).max(1.0), 4096), radius)),
            )
        }
        KernelMode::None => unreachable!(),
    };
    kind.validate()?;
    if kind.dim() != 2 {
        return Err(Error::InvalidConfig(
            "spectral solver is two-dimensional".into(),
        ));
    }
    for j in 0..n {
        let ky = sp.deriv_wavenumber(j);
        for i in 0..n {
            let kx = sp.deriv_wavenumber(i);
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 {
                continue; // mean-free velocity convention
            }
            let g = match &damp {
                None => 1.0,
                Some((table, radius)) => table.eval(radius * k2.sqrt()),
            };
            let (vx, vy) = match kind {
                // u_hat = -i xi_perp w_hat / |xi|^2, xi_perp = (-ky, kx)
                KernelKind::BiotSavart => (ky / k2, -kx / k2),
                // u_hat = -i xi C_d S_{d-1} w_hat / |xi|^2
                KernelKind::RepulsivePoisson { c_d, .. } => {
                    let c = c_d * unit_sphere_area(2);
                    (-c * kx / k2, -c * ky / k2)
                }
                KernelKind::RieszGradient { .. } => {
                    return Err(Error::InvalidConfig(
                        "spectral velocity implemented for Biot-Savart and repulsive Poisson"
                            .into(),
                    ))
                }
            };
            let idx = j * n + i;
            mx[idx] = Complex64::new(0.0, g * vx);
            my[idx] = Complex64::new(0.0, g * vy);
        }
    }
    Ok((mx, my))
}

#[derive(Debug, Clone)]
pub struct PdeConfig {
    pub nu: f64,
    pub kernel: KernelMode,
    pub grid: GridSpec,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_times: Vec<f64>,
    /// blow-up guard: sup threshold as a multiple of the initial sup
    pub blow_up_factor: f64,
}

impl PdeConfig {
    pub fn validate(&self) -> Result<()> {
        // nu = 0 is allowed for noise-free comparisons (identity semigroup)
        if self.nu < 0.0 || self.dt <= 0.0 || self.t_final < 0.0 {
            return Err(Error::InvalidConfig(
                "nu must be nonnegative, dt positive, T nonnegative".into(),
            ));
        }
        if self.blow_up_factor <= 1.0 {
            return Err(Error::InvalidConfig("blow-up factor must exceed 1".into()));
        }
        Ok(())
    }
}

/// One solver instance: grid plans plus precomputed multipliers.
pub struct PdeSolver {
    sp: Spectral,
    nu: f64,
    mult: (Vec<Complex64>, Vec<Complex64>),
    advect: bool,
}

impl PdeSolver {
    pub fn new(grid: GridSpec, nu: f64, kernel: KernelMode) -> Result<Self> {
        let sp = Spectral::new(grid);
        let mult = velocity_multipliers(&sp, kernel)?;
        Ok(PdeSolver {
            sp,
            nu,
            mult,
            advect: !matches!(kernel, KernelMode::None),
        })
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    /// K * w as a velocity field (spectral symbol application).
    pub fn velocity(&self, f: &GridField) -> VectorField {
        let w = self.sp.forward(&f.values);
        self.velocity_from_spectrum(&w)
    }

    fn velocity_from_spectrum(&self, w: &[Complex64]) -> VectorField {
        let ux_hat: Vec<Complex64> = w.iter().zip(&self.mult.0).map(|(a, m)| a * m).collect();
        let uy_hat: Vec<Complex64> = w.iter().zip(&self.mult.1).map(|(a, m)| a * m).collect();
        VectorField {
            spec: self.sp.spec,
            x: self.sp.inverse(ux_hat),
            y: self.sp.inverse(uy_hat),
        }
    }

    /// Exponential-Euler update of the mild equation.
    pub fn step(&self, f: &GridField, dt: f64) -> GridField {
        let n2 = self.sp.spec.n * self.sp.spec.n;
        let w = self.sp.forward(&f.values);
        let mut new_hat = if self.advect {
            let u = self.velocity_from_spectrum(&w);
            let gx: Vec<f64> = u.x.iter().zip(&f.values).map(|(a, b)| a * b).collect();
            let gy: Vec<f64> = u.y.iter().zip(&f.values).map(|(a, b)| a * b).collect();
            let mut gx_hat = self.sp.forward(&gx);
            let mut gy_hat = self.sp.forward(&gy);
            self.sp.dealias(&mut gx_hat);
            self.sp.dealias(&mut gy_hat);
            let div = self.sp.divergence(&gx_hat, &gy_hat);
            (0..n2).map(|i| w[i] - dt * div[i]).collect::<Vec<_>>()
        } else {
            w
        };
        self.sp.apply_heat(&mut new_hat, self.nu, dt);
        GridField {
            spec: self.sp.spec,
            values: self.sp.inverse(new_hat),
        }
    }
}

/// Heat semigroup applied for time t.
pub fn heat_propagate(f: &GridField, t: f64, nu: f64) -> GridField {
    assert!(t >= 0.0);
    if t == 0.0 {
        return f.clone();
    }
    let sp = Spectral::new(f.spec);
    let mut w = sp.forward(&f.values);
    sp.apply_heat(&mut w, nu, t);
    GridField {
        spec: f.spec,
        values: sp.inverse(w),
    }
}

/// K * w for the configured kernel mode.
pub fn velocity_from_vorticity(f: &GridField, nu: f64, mode: KernelMode) -> Result<VectorField> {
    let solver = PdeSolver::new(f.spec, nu, mode)?;
    Ok(solver.velocity(f))
}

/// Single mild step (constructs a solver; use `PdeSolver` for time loops).
pub fn step_mild(f: &GridField, dt: f64, cfg: &PdeConfig) -> Result<GridField> {
    cfg.validate()?;
    let sup = f.sup_norm();
    if !sup.is_finite() {
        return Err(Error::BlowUp {
            time: f64::NAN,
            sup,
        });
    }
    let solver = PdeSolver::new(f.spec, cfg.nu, cfg.kernel)?;
    Ok(solver.step(f, dt))
}

#[derive(Debug, Clone)]
pub struct PdeTrajectory {
    pub times: Vec<f64>,
    pub fields: Vec<GridField>,
    /// time at which the sup-norm guard tripped, if it did
    pub blew_up_at: Option<f64>,
}

impl PdeTrajectory {
    pub fn last(&self) -> &GridField {
        self.fields.last().unwrap()
    }
}

/// March the mild equation to t_final, storing snapshots at the requested
/// times (which must align with the step grid).
pub fn solve(omega0: &GridField, cfg: &PdeConfig) -> Result<PdeTrajectory> {
    cfg.validate()?;
    let solver = PdeSolver::new(omega0.spec, cfg.nu, cfg.kernel)?;
    let threshold = cfg.blow_up_factor * omega0.sup_norm().max(1e-300);
    let steps = (cfg.t_final / cfg.dt).round() as usize;
    if ((steps as f64 * cfg.dt) - cfg.t_final).abs() > 1e-9 * cfg.t_final.max(1.0) {
        return Err(Error::InvalidConfig(
            "t_final must be a multiple of dt".into(),
        ));
    }
    let snap_steps = snapshot_steps(&cfg.snapshot_times, cfg.dt, steps)?;

    let mut fields = Vec::new();
    let mut times = Vec::new();
    let mut f = omega0.clone();
    if snap_steps.contains(&0) {
        times.push(0.0);
        fields.push(f.clone());
    }
    for k in 1..=steps {
        if f.sup_norm() > threshold {
            return Ok(PdeTrajectory {
                times,
                fields,
                blew_up_at: Some((k - 1) as f64 * cfg.dt),
            });
        }
        f = solver.step(&f, cfg.dt);
        if snap_steps.contains(&k) {
            times.push(k as f64 * cfg.dt);
            fields.push(f.clone());
        }
    }
    Ok(PdeTrajectory {
        times,
        fields,
        blew_up_at: None,
    })
}

/// Snapshot times rounded to the nearest step; requested times that fall on
/// the same step or beyond the horizon are configuration errors. Outputs
/// everywhere carry the actual (rounded) times.
pub(crate) fn snapshot_steps(snapshot_times: &[f64], dt: f64, steps: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(snapshot_times.len());
    for &t in snapshot_times {
        let k = (t / dt).round() as usize;
        if k > steps {
            return Err(Error::InvalidConfig(format!(
                "snapshot time {t} lies beyond the horizon of {steps} steps at dt = {dt}"
            )));
        }
        if out.contains(&k) {
            return Err(Error::InvalidConfig(format!(
                "snapshot times collide on step {k} (requested {t}); snapshots cannot be denser than dt"
            )));
        }
        out.push(k);
    }
    Ok(out)
}

/// L^1 residual of the mild identity evaluated on the stored snapshots with
/// trapezoidal quadrature of the Duhamel integral.
pub fn mild_residual(traj: &PdeTrajectory, cfg: &PdeConfig) -> Result<f64> {
    if traj.fields.len() < 2 {
        return Err(Error::InvalidConfig(
            "need at least two snapshots for the residual".into(),
        ));
    }
    let solver = PdeSolver::new(traj.fields[0].spec, cfg.nu, cfg.kernel)?;
    let sp = solver.spectral();
    let t_final = *traj.times.last().unwrap();
    let n2 = sp.spec.n * sp.spec.n;

    // accumulate trapezoid of div e^{(T-s)A} [(K*w_s) w_s] over snapshots
    let mut duhamel = vec![Complex64::default(); n2];
    for (idx, (s, f)) in traj.times.iter().zip(&traj.fields).enumerate() {
        let w = sp.forward(&f.values);
        let u = solver.velocity_from_spectrum(&w);
        let gx: Vec<f64> = u.x.iter().zip(&f.values).map(|(a, b)| a * b).collect();
        let gy: Vec<f64> = u.y.iter().zip(&f.values).map(|(a, b)| a * b).collect();
        let mut gx_hat = sp.forward(&gx);
        let mut gy_hat = sp.forward(&gy);
        sp.dealias(&mut gx_hat);
        sp.dealias(&mut gy_hat);
        let mut div = sp.divergence(&gx_hat, &gy_hat);
        sp.apply_heat(&mut div, cfg.nu, t_final - s);
        let w_trap = trapezoid_weight(&traj.times, idx);
        for i in 0..n2 {
            duhamel[i] += w_trap * div[i];
        }
    }

    let mut start = sp.forward(&traj.fields[0].values);
    sp.apply_heat(&mut start, cfg.nu, t_final);
    let final_hat = sp.forward(&traj.last().values);
    let residual_hat: Vec<Complex64> = (0..n2)
        .map(|i| final_hat[i] - start[i] + duhamel[i])
        .collect();
    let residual = GridField {
        spec: sp.spec,
        values: sp.inverse(residual_hat),
    };
    Ok(residual.l1_norm())
}

pub(crate) fn trapezoid_weight(times: &[f64], idx: usize) -> f64 {
    let left = if idx == 0 {
        0.0
    } else {
        times[idx] - times[idx - 1]
    };
    let right = if idx + 1 == times.len() {
        0.0
    } else {
        times[idx + 1] - times[idx]
    };
    0.5 * (left + right)
}
