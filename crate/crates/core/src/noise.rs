//! Divergence-free environmental noise with Kraichnan-type power-law
//! spectrum 1/|k|^{d+alpha} cut off below |k| = e^{n_scale}.
//!
//! The field is synthesized from randomly sampled Fourier modes with
//! polarizations orthogonal to their wavevectors; the weight normalization
//! makes the synthesized covariance an unbiased estimator of the spectral
//! integral at every separation. The quadrature side evaluates the same
//! covariance as longitudinal/transverse radial functions, which serves as
//! the oracle for the Monte Carlo construction.

use crate::error::{Error, Result};
use crate::quad::{bessel_j, unit_sphere_area, GaussRule};
use crate::rng::{self, Domain};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::f64::consts::PI;

/// nu with Q(0) = 2 nu I_d: angular average of the projector contributes
/// (d-1)/d and the radial spectrum integrates to 1/alpha.
pub fn nu_theoretical(d: usize, alpha: f64) -> Result<f64> {
    if alpha <= 2.0 {
        return Err(Error::InvalidAlpha(alpha));
    }
    if d < 2 {
        return Err(Error::InvalidConfig("noise dimension must be >= 2".into()));
    }
    Ok((d as f64 - 1.0) * unit_sphere_area(d) / (2.0 * d as f64 * alpha))
}

// ---------------------------------------------------------------------------
// Covariance quadrature
// ---------------------------------------------------------------------------

/// Dense d x d covariance matrix (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    pub d: usize,
    pub m: Vec<f64>,
}

impl Covariance {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.d + j]
    }

    pub fn frobenius(&self) -> f64 {
        self.m.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.d).map(|i| self.get(i, i)).sum()
    }

    /// Assemble from longitudinal/transverse components along direction z.
    fn from_components(d: usize, z: &[f64], q_l: f64, q_t: f64) -> Self {
        let rho: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut m = vec![0.0; d * d];
        if rho == 0.0 {
            for i in 0..d {
                m[i * d + i] = q_l; // q_l == q_t at the origin
            }
            return Covariance { d, m };
        }
        for i in 0..d {
            for j in 0..d {
                let zi = z[i] / rho;
                let zj = z[j] / rho;
                let delta = if i == j { 1.0 } else { 0.0 };
                m[i * d + j] = q_l * zi * zj + q_t * (delta - zi * zj);
            }
        }
        Covariance { d, m }
    }
}

/// Largest wavenumber needed so the crude (non-oscillatory) tail bound stays
/// below `frac` of the covariance scale |Q(0)|_F.
fn kmax_for_tail(d: usize, alpha: f64, frac: f64) -> Result<f64> {
    let nu = nu_theoretical(d, alpha)?;
    let scale = 2.0 * nu * (d as f64).sqrt();
    // |angular factor| <= 2 pi (d=2) or 8 pi/3 (d=3)
    let ang = if d == 2 { 2.0 * PI } else { 8.0 * PI / 3.0 };
    let tol = frac * scale;
    let kmax = (ang / (alpha * tol)).powf(1.0 / alpha);
    if kmax > 1e5 {
        return Err(Error::TailTruncation {
            tail: ang * kmax.powf(-alpha) / alpha,
            frac,
        });
    }
    Ok(kmax.max(8.0))
}

/// Longitudinal and transverse covariance components at scaled separation
/// omega = e^{n_scale} |z|.
fn q_components(d: usize, alpha: f64, omega: f64) -> Result<(f64, f64)> {
    let kmax = kmax_for_tail(d, alpha, 1e-8)?;
    if omega < 1e-12 {
        // exact radial integral at the origin
        let radial = 1.0 / alpha;
        return Ok(match d {
            2 => (PI * radial, PI * radial),
            _ => (2.0 * PI * radial * 4.0 / 3.0, 2.0 * PI * radial * 4.0 / 3.0),
        });
    }
    match d {
        2 => {
            if omega >= 100.0 {
                Ok(q_components_2d_asymptotic(alpha, omega))
            } else {
                Ok(q_components_2d_direct(alpha, omega, kmax))
            }
        }
        3 => {
            if omega * kmax > 4e5 {
                return Err(Error::TailTruncation {
                    tail: omega * kmax,
                    frac: 1e-8,
                });
            }
            Ok(q_components_3d_direct(alpha, omega, kmax))
        }
        _ => Err(Error::InvalidConfig(
            "covariance supports d = 2 or 3".into(),
        )),
    }
}

/// Direct panel quadrature over the spectrum radius, d = 2:
/// Q_L = pi INT r^{-a-1} (J0 + J2)(omega r) dr, Q_T with (J0 - J2).
fn q_components_2d_direct(alpha: f64, omega: f64, kmax: f64) -> (f64, f64) {
    let rule = GaussRule::new(16);
    let span = kmax - 1.0;
    let panels = ((omega * span / 3.0).ceil() as usize).clamp(16, 2_000_000);
    let dr = span / panels as f64;
    let mut acc_l = 0.0;
    let mut acc_t = 0.0;
    for i in 0..panels {
        let a = 1.0 + i as f64 * dr;
        for (r, w) in rule.nodes_weights(a, a + dr) {
            let weight = w * r.powf(-alpha - 1.0);
            let j0 = bessel_j(0, omega * r);
            let j2 = bessel_j(2, omega * r);
            acc_l += weight * (j0 + j2);
            acc_t += weight * (j0 - j2);
        }
    }
    (PI * acc_l, PI * acc_t)
}

/// Endpoint expansion for large omega, d = 2. Uses the identities
/// J0 + J2 = 2 J1(x)/x and J0 - J2 = 2 J1'(x) and the integration-by-parts
/// recursion between F_s = INT_1^inf r^{-s} J1(omega r) dr and
/// G_t = INT_1^inf r^{-t} J0(omega r) dr.
fn q_components_2d_asymptotic(alpha: f64, omega: f64) -> (f64, f64) {
    let j0 = bessel_j(0, omega);
    let j1 = bessel_j(1, omega);
    // F_s = J0(omega)/omega - (s/omega) G_{s+1}
    // G_t = -J1(omega)/omega + ((t+1)/omega) F_{t+1}
    fn f_s(s: f64, omega: f64, j0: f64, j1: f64, depth: usize) -> f64 {
        if depth == 0 {
            return 0.0;
        }
        j0 / omega - (s / omega) * g_t(s + 1.0, omega, j0, j1, depth - 1)
    }
    fn g_t(t: f64, omega: f64, j0: f64, j1: f64, depth: usize) -> f64 {
        if depth == 0 {
            return 0.0;
        }
        -j1 / omega + ((t + 1.0) / omega) * f_s(t + 1.0, omega, j0, j1, depth - 1)
    }
    let f_a2 = f_s(alpha + 2.0, omega, j0, j1, 12);
    let g_a1 = g_t(alpha + 1.0, omega, j0, j1, 12);
    let q_l = 2.0 * PI / omega * f_a2;
    let q_t = 2.0 * PI * (g_a1 - f_a2 / omega);
    (q_l, q_t)
}

fn q_components_3d_direct(alpha: f64, omega: f64, kmax: f64) -> (f64, f64) {
    // angular mu-integrals in closed form
    fn i_long(a: f64) -> f64 {
        if a < 1e-2 {
            4.0 / 3.0 - 2.0 * a * a / 15.0
        } else {
            4.0 * (a.sin() - a * a.cos()) / (a * a * a)
        }
    }
    fn i_trans(a: f64) -> f64 {
        if a < 1e-2 {
            4.0 / 3.0 - 4.0 * a * a / 15.0
        } else {
            a.sin() / a + ((a * a - 2.0) * a.sin() + 2.0 * a * a.cos()) / (a * a * a)
        }
    }
    let rule = GaussRule::new(16);
    let span = kmax - 1.0;
    let panels = ((omega * span / 3.0).ceil() as usize).clamp(16, 2_000_000);
    let dr = span / panels as f64;
    let mut acc_l = 0.0;
    let mut acc_t = 0.0;
    for i in 0..panels {
        let a = 1.0 + i as f64 * dr;
        for (r, w) in rule.nodes_weights(a, a + dr) {
            let weight = w * r.powf(-alpha - 1.0);
            acc_l += weight * i_long(omega * r);
            acc_t += weight * i_trans(omega * r);
        }
    }
    (2.0 * PI * acc_l, 2.0 * PI * acc_t)
}

/// The covariance matrix Q_{n_scale}(z) by numerical quadrature of the
/// rescaled spectral integral.
pub fn covariance_quadrature(d: usize, alpha: f64, n_scale: f64, z: &[f64]) -> Result<Covariance> {
    if alpha <= 2.0 {
        return Err(Error::InvalidAlpha(alpha));
    }
    if z.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: z.len(),
        });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("separation must be finite".into()));
    }
    let rho: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let omega = n_scale.exp() * rho;
    let (q_l, q_t) = q_components(d, alpha, omega)?;
    Ok(Covariance::from_components(d, z, q_l, q_t))
}

/// Radial table of |Q| and its components for repeated evaluation.
#[derive(Debug, Clone)]
pub struct CovarianceProfile {
    pub d: usize,
    pub alpha: f64,
    pub n_scale: f64,
    rho_max: f64,
    step: f64,
    q_l: Vec<f64>,
    q_t: Vec<f64>,
}

impl CovarianceProfile {
    pub fn build(d: usize, alpha: f64, n_scale: f64, rho_max: f64, samples: usize) -> Result<Self> {
        if samples < 16 {
            return Err(Error::InvalidConfig("profile needs >= 16 samples".into()));
        }
        let step = rho_max / samples as f64;
        let scale = n_scale.exp();
        let comps: Vec<(f64, f64)> = (0..=samples)
            .into_par_iter()
            .map(|i| q_components(d, alpha, scale * step * i as f64))
            .collect::<Result<_>>()?;
        Ok(CovarianceProfile {
            d,
            alpha,
            n_scale,
            rho_max,
            step,
            q_l: comps.iter().map(|c| c.0).collect(),
            q_t: comps.iter().map(|c| c.1).collect(),
        })
    }

    fn interp(&self, table: &[f64], rho: f64) -> f64 {
        let u = rho / self.step;
        let i = (u as usize).min(table.len() - 2);
        let frac = u - i as f64;
        table[i] * (1.0 - frac) + table[i + 1] * frac
    }

    pub fn eval(&self, z: &[f64]) -> Covariance {
        let rho: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        debug_assert!(rho <= self.rho_max * (1.0 + 1e-9));
        let q_l = self.interp(&self.q_l, rho);
        let q_t = self.interp(&self.q_t, rho);
        Covariance::from_components(self.d, z, q_l, q_t)
    }

    /// Frobenius norm |Q(z)| as a function of |z|.
    pub fn frobenius(&self, rho: f64) -> f64 {
        let q_l = self.interp(&self.q_l, rho);
        let q_t = self.interp(&self.q_t, rho);
        (q_l * q_l + (self.d as f64 - 1.0) * q_t * q_t).sqrt()
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }
}

/// L^r norm of Q_{n_scale} by radial grid quadrature of covariance samples
/// over a box of the given half-width.
pub fn qn_lr_norm(
    d: usize,
    alpha: f64,
    n_scale: f64,
    r: f64,
    box_half_width: f64,
    resolution: usize,
) -> Result<f64> {
    if r < 2.0 {
        return Err(Error::InvalidConfig(format!(
            "L^r norm needs r >= 2, got {r}"
        )));
    }
    let profile = CovarianceProfile::build(d, alpha, n_scale, box_half_width, resolution)?;
    let q0 = profile.frobenius(0.0);
    let boundary = profile.frobenius(box_half_width);
    if boundary > 1e-6 * q0 {
        return Err(Error::BoxTooSmall {
            boundary,
            limit: 1e-6 * q0,
        });
    }
    // trapezoid on the radial samples of |Q|^r rho^{d-1}
    let h = box_half_width / resolution as f64;
    let mut acc = 0.0;
    for i in 0..=resolution {
        let rho = i as f64 * h;
        let w = if i == 0 || i == resolution { 0.5 } else { 1.0 };
        acc += w * profile.frobenius(rho).powf(r) * rho.powi(d as i32 - 1);
    }
    Ok((unit_sphere_area(d) * acc * h).powf(1.0 / r))
}

// ---------------------------------------------------------------------------
// Monte Carlo synthesis
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Mode {
    k: [f64; 3],
    khat: [f64; 3],
    /// (d-1) polarization unit vectors orthogonal to k
    pol: [[f64; 3]; 2],
    sqrt_w: f64,
}

/// A sampled realization of the spectral noise.
#[derive(Debug, Clone)]
pub struct NoiseField {
    pub d: usize,
    pub alpha: f64,
    pub n_scale: f64,
    pub nu: f64,
    modes: Vec<Mode>,
}

/// Per-step shared Gaussian increments: one (cos, sin) pair per mode and
/// polarization, already scaled by sqrt(dt). Every particle in a step sees
/// the same draws; that is what makes the noise environmental.
#[derive(Debug, Clone)]
pub struct ModeIncrements {
    pub dt: f64,
    /// layout: [mode][polarization] -> (xi, eta)
    draws: Vec<(f64, f64)>,
}

/// Sample `m_modes` wavevectors from the normalized spectral density
/// |k|^{-(d+alpha)} on |k| >= e^{n_scale} (inverse-CDF radius, uniform
/// direction). The per-mode weight S_{d-1}/(alpha M) makes the synthesized
/// covariance unbiased for Q_{n_scale}(z) at every z.
pub fn build_noise(
    d: usize,
    alpha: f64,
    n_scale: f64,
    m_modes: usize,
    master_seed: u64,
    replica: u64,
) -> Result<NoiseField> {
    if alpha <= 2.0 {
        return Err(Error::InvalidAlpha(alpha));
    }
    if m_modes < 16 {
        return Err(Error::InvalidConfig(format!(
            "need at least 16 modes, got {m_modes}"
        )));
    }
    if !(d == 2 || d == 3) {
        return Err(Error::InvalidConfig(
            "noise synthesis supports d = 2 or 3".into(),
        ));
    }
    let nu = nu_theoretical(d, alpha)?;
    let cutoff = n_scale.exp();
    let weight = unit_sphere_area(d) / (alpha * m_modes as f64);
    let sqrt_w = weight.sqrt();
    let mut rng = rng::stream(master_seed, Domain::NoiseModes, replica);

    let mut modes = Vec::with_capacity(m_modes);
    for _ in 0..m_modes {
        let u: f64 = rng.gen_range(0.0..1.0);
        let radius = cutoff * (1.0 - u).powf(-1.0 / alpha);
        let (khat, pol) = if d == 2 {
            let theta = rng.gen_range(0.0..2.0 * PI);
            let (s, c) = theta.sin_cos();
            // unique (up to sign) in-plane polarization
            ([c, s, 0.0], [[-s, c, 0.0], [0.0, 0.0, 0.0]])
        } else {
            let z: f64 = rng.gen_range(-1.0..1.0);
            let phi = rng.gen_range(0.0..2.0 * PI);
            let sz = (1.0 - z * z).sqrt();
            let khat = [sz * phi.cos(), sz * phi.sin(), z];
            // orthonormal pair spanning the plane orthogonal to k
            let seedv = if khat[0].abs() < 0.9 {
                [1.0, 0.0, 0.0]
            } else {
                [0.0, 1.0, 0.0]
            };
            let dot = seedv[0] * khat[0] + seedv[1] * khat[1] + seedv[2] * khat[2];
            let mut e1 = [
                seedv[0] - dot * khat[0],
                seedv[1] - dot * khat[1],
                seedv[2] - dot * khat[2],
            ];
            let n1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
            e1 = [e1[0] / n1, e1[1] / n1, e1[2] / n1];
            let e2 = [
                khat[1] * e1[2] - khat[2] * e1[1],
                khat[2] * e1[0] - khat[0] * e1[2],
                khat[0] * e1[1] - khat[1] * e1[0],
            ];
            (khat, [e1, e2])
        };
        let k = [radius * khat[0], radius * khat[1], radius * khat[2]];
        modes.push(Mode {
            k,
            khat,
            pol,
            sqrt_w,
        });
    }
    Ok(NoiseField {
        d,
        alpha,
        n_scale,
        nu,
        modes,
    })
}

impl NoiseField {
    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    fn polarizations(&self) -> usize {
        self.d - 1
    }

    /// Largest |polarization . khat| over all modes; zero for the exact
    /// divergence-free construction.
    pub fn max_polarization_defect(&self) -> f64 {
        self.modes
            .iter()
            .flat_map(|m| {
                (0..self.polarizations()).map(move |p| {
                    (m.pol[p][0] * m.khat[0] + m.pol[p][1] * m.khat[1] + m.pol[p][2] * m.khat[2])
                        .abs()
                })
            })
            .fold(0.0, f64::max)
    }

    /// The exact covariance of the synthesized field conditioned on this
    /// mode set: sum_j w_j cos(k_j . z) e_j e_j^T.
    pub fn realized_covariance(&self, z: &[f64]) -> Covariance {
        let d = self.d;
        let mut m = vec![0.0; d * d];
        for mode in &self.modes {
            let kz = mode.k[..d].iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
            let c = kz.cos() * mode.sqrt_w * mode.sqrt_w;
            for p in 0..self.polarizations() {
                for i in 0..d {
                    for j in 0..d {
                        m[i * d + j] += c * mode.pol[p][i] * mode.pol[p][j];
                    }
                }
            }
        }
        Covariance { d, m }
    }
}

/// Draw the shared Gaussian increments for one time step.
pub fn sample_shared_increments<R: Rng>(
    noise: &NoiseField,
    dt: f64,
    rng: &mut R,
) -> ModeIncrements {
    assert!(dt > 0.0);
    let sqrt_dt = dt.sqrt();
    let n = noise.mode_count() * noise.polarizations();
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = rng.sample(StandardNormal);
        let eta: f64 = rng.sample(StandardNormal);
        draws.push((xi * sqrt_dt, eta * sqrt_dt));
    }
    ModeIncrements { dt, draws }
}

/// Brownian increment of the noise field at position x over one step.
pub fn velocity_increment(noise: &NoiseField, incs: &ModeIncrements, x: &[f64]) -> Vec<f64> {
    let d = noise.d;
    debug_assert_eq!(x.len(), d);
    let mut out = vec![0.0; d];
    let pols = noise.polarizations();
    for (j, mode) in noise.modes.iter().enumerate() {
        let kx: f64 = mode.k[..d].iter().zip(x).map(|(a, b)| a * b).sum();
        let (s, c) = kx.sin_cos();
        for p in 0..pols {
            let (xi, eta) = incs.draws[j * pols + p];
            let amp = mode.sqrt_w * (c * xi + s * eta);
            for (i, o) in out.iter_mut().enumerate() {
                *o += amp * mode.pol[p][i];
            }
        }
    }
    out
}

/// 2D fast path used by the particle stepper.
pub fn velocity_increment2(noise: &NoiseField, incs: &ModeIncrements, x: [f64; 2]) -> [f64; 2] {
    debug_assert_eq!(noise.d, 2);
    let mut out = [0.0, 0.0];
    for (j, mode) in noise.modes.iter().enumerate() {
        let kx = mode.k[0] * x[0] + mode.k[1] * x[1];
        let (s, c) = kx.sin_cos();
        let (xi, eta) = incs.draws[j];
        let amp = mode.sqrt_w * (c * xi + s * eta);
        out[0] += amp * mode.pol[0][0];
        out[1] += amp * mode.pol[0][1];
    }
    out
}

/// Monte Carlo estimate of Q(z) (with standard errors) from freshly sampled
/// mode sets: one mode set and one increment draw per replica.
pub struct CovEstimate {
    pub mean: Covariance,
    pub stderr: Covariance,
}

pub fn empirical_covariance(
    d: usize,
    alpha: f64,
    n_scale: f64,
    m_modes: usize,
    replicas: usize,
    master_seed: u64,
    z: &[f64],
) -> Result<CovEstimate> {
    let origin = vec![0.0; d];
    let samples: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|rep| {
            let noise = build_noise(d, alpha, n_scale, m_modes, master_seed, rep)?;
            let mut rng = rng::stream(master_seed, Domain::NoiseIncrements, rep);
            let incs = sample_shared_increments(&noise, 1.0, &mut rng);
            let w0 = velocity_increment(&noise, &incs, &origin);
            let wz = velocity_increment(&noise, &incs, z);
            let mut outer = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    outer[i * d + j] = w0[i] * wz[j];
                }
            }
            Ok(outer)
        })
        .collect::<Result<_>>()?;

    let n = samples.len() as f64;
    let mut mean = vec![0.0; d * d];
    for s in &samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d * d];
    for s in &samples {
        for ((v, m), x) in var.iter_mut().zip(&mean).zip(s) {
            *v += (x - m) * (x - m) / (n - 1.0);
        }
    }
    let stderr = var.iter().map(|v| (v / n).sqrt()).collect();
    Ok(CovEstimate {
        mean: Covariance { d, m: mean },
        stderr: Covariance { d, m: stderr },
    })
}
