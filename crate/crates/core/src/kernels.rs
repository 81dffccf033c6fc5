//! Singular interaction kernels and their mollified regularizations.
//!
//! The supported kernels are smooth away from the origin, antisymmetric and
//! have nonnegative distributional divergence. The regularization K_eps =
//! K * rho_eps is evaluated from a radial profile: rotation/reflection
//! equivariance of the kernels together with a radial mollifier forces
//! K_eps(x) = b(|x|) dir(x), where dir is the unit tangential direction for
//! the Biot-Savart kernel and the unit radial direction for gradient-type
//! kernels. The profile is tabulated by adaptive polar quadrature on the
//! mollified ball; outside it the componentwise-harmonic kernels satisfy the
//! mean-value identity K_eps = K exactly.

use crate::error::{Error, Result};
use crate::mollifiers::bump_profile;
use crate::quad::{unit_sphere_area, GaussRule};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Interaction kernel selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// K(x) = (1/2pi) x^perp / |x|^2 on R^2.
    BiotSavart,
    /// K(x) = C_d x / |x|^d on R^d. With C_d = 1/S_{d-1} the divergence is a
    /// unit Dirac mass.
    RepulsivePoisson { d: usize, c_d: f64 },
    /// K = grad V_s with V_s(x) = -|x|^{-s} (s > 0) or log|x| (s = 0);
    /// requires 0 <= s <= d-2.
    RieszGradient { d: usize, s: f64 },
}

impl KernelKind {
    /// Repulsive Poisson kernel with the default normalization C_d = 1/S_{d-1}.
    pub fn repulsive_poisson(d: usize) -> Self {
        KernelKind::RepulsivePoisson {
            d,
            c_d: 1.0 / unit_sphere_area(d),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            KernelKind::BiotSavart => 2,
            KernelKind::RepulsivePoisson { d, .. } | KernelKind::RieszGradient { d, .. } => *d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelKind::BiotSavart => Ok(()),
            KernelKind::RepulsivePoisson { d, c_d } => {
                if d < 2 {
                    return Err(Error::InvalidConfig(
                        "repulsive Poisson needs d >= 2".into(),
                    ));
                }
                if c_d <= 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "C_d must be positive, got {c_d}"
                    )));
                }
                Ok(())
            }
            KernelKind::RieszGradient { d, s } => {
                if d < 2 {
                    return Err(Error::InvalidConfig("Riesz gradient needs d >= 2".into()));
                }
                if !(0.0..=(d as f64 - 2.0)).contains(&s) {
                    return Err(Error::InvalidConfig(format!(
                        "Riesz exponent must satisfy 0 <= s <= d-2, got s={s}, d={d}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Least admissible integrability exponent: the kernel lies in
    /// L^{p'}(B(1)) for every p exceeding this value.
    pub fn min_p(&self) -> f64 {
        match *self {
            KernelKind::BiotSavart => 2.0,
            KernelKind::RepulsivePoisson { d, .. } => d as f64,
            KernelKind::RieszGradient { s, .. } => s + 2.0,
        }
    }

    /// All supported kernels are odd.
    pub fn antisymmetric(&self) -> bool {
        true
    }

    /// True when the kernel components are harmonic away from the origin,
    /// which makes the mollified kernel exact outside the mollifier support.
    pub fn componentwise_harmonic(&self) -> bool {
        match *self {
            KernelKind::BiotSavart => true,
            KernelKind::RepulsivePoisson { .. } => true,
            // grad(|x|^{-s}) is harmonic only at s = d-2 (the Poisson case)
            // and for the planar logarithm.
            KernelKind::RieszGradient { d, s } => {
                (s - (d as f64 - 2.0)).abs() < 1e-14 || (d == 2 && s == 0.0)
            }
        }
    }

    /// Magnitude of the (radial or tangential) component at distance r > 0.
    fn component_magnitude(&self, r: f64) -> f64 {
        match *self {
            KernelKind::BiotSavart => 1.0 / (2.0 * PI * r),
            KernelKind::RepulsivePoisson { d, c_d } => c_d * r.powi(1 - d as i32),
            KernelKind::RieszGradient { s, .. } => {
                if s == 0.0 {
                    1.0 / r
                } else {
                    s * r.powf(-s - 1.0)
                }
            }
        }
    }
}

/// Evaluate the singular kernel at x != 0.
pub fn eval_kernel(kind: KernelKind, x: &[f64]) -> Result<Vec<f64>> {
    kind.validate()?;
    let d = kind.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let r2: f64 = x.iter().map(|xi| xi * xi).sum();
    if r2 == 0.0 {
        return Err(Error::ZeroPoint);
    }
    let r = r2.sqrt();
    match kind {
        KernelKind::BiotSavart => Ok(vec![-x[1] / (2.0 * PI * r2), x[0] / (2.0 * PI * r2)]),
        _ => {
            let a = kind.component_magnitude(r) / r;
            Ok(x.iter().map(|xi| a * xi).collect())
        }
    }
}

/// 2D fast path used by drift tables and the quadrature code.
pub fn eval_kernel2(kind: KernelKind, x: [f64; 2]) -> [f64; 2] {
    let r2 = x[0] * x[0] + x[1] * x[1];
    match kind {
        KernelKind::BiotSavart => [-x[1] / (2.0 * PI * r2), x[0] / (2.0 * PI * r2)],
        _ => {
            let a = kind.component_magnitude(r2.sqrt()) / r2.sqrt();
            [a * x[0], a * x[1]]
        }
    }
}

/// The regularized kernel K_eps = K * rho_eps, with rho the standard radial
/// bump of support radius `rho_radius`, scaled to epsilon.
#[derive(Debug, Clone)]
pub struct RegularizedKernel {
    pub kind: KernelKind,
    pub epsilon: f64,
    pub rho_radius: f64,
    pub p_prime: f64,
    /// Radial samples of the signed component magnitude b(t) on a uniform
    /// grid over [0, table_extent].
    profile: Vec<f64>,
    step: f64,
    table_extent: f64,
}

/// Build K_eps by adaptive quadrature of the convolution on the mollified
/// ball. `p` is the integrability exponent of Hypothesis-type constraints
/// (p > 2 and p > min_p of the kernel); its conjugate is stored for the
/// sup-norm scaling bounds.
pub fn build_regularized(
    kind: KernelKind,
    epsilon: f64,
    rho_radius: f64,
    table_resolution: usize,
    p: f64,
) -> Result<RegularizedKernel> {
    kind.validate()?;
    if epsilon <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if rho_radius <= 0.0 {
        return Err(Error::InvalidConfig("rho_radius must be positive".into()));
    }
    if table_resolution < 64 {
        return Err(Error::InvalidConfig(format!(
            "table_resolution must be >= 64, got {table_resolution}"
        )));
    }
    if p <= 2.0 || p <= kind.min_p() {
        return Err(Error::InvalidExponents { m: f64::NAN, p });
    }

    let ball = epsilon * rho_radius;
    // Harmonic components obey the mean-value identity outside the ball; the
    // general Riesz case keeps a quadrature table out to 8 radii, beyond
    // which the mollification correction is O((eps/|x|)^2) relative.
    let extent = if kind.componentwise_harmonic() {
        ball
    } else {
        8.0 * ball
    };
    let n = if kind.componentwise_harmonic() {
        table_resolution
    } else {
        8 * table_resolution
    };
    let step = extent / n as f64;

    // two samples past the switch radius so cubic interpolation has a full
    // stencil in the last interior cell
    let profile: Vec<f64> = (0..=n + 2)
        .into_par_iter()
        .map(|i| {
            if i == 0 {
                // odd kernel against an even mollifier
                return Ok(0.0);
            }
            convolved_component(kind, epsilon, rho_radius, i as f64 * step)
        })
        .collect::<Result<_>>()?;

    Ok(RegularizedKernel {
        kind,
        epsilon,
        rho_radius,
        p_prime: p / (p - 1.0),
        profile,
        step,
        table_extent: extent,
    })
}

/// Component of (K * rho_eps) at distance t from the origin, by polar
/// quadrature centered on the kernel singularity. The angular integral runs
/// over the exact angular support of the shifted mollifier, so the smooth
/// bump is integrated on its own support and Gauss-Legendre converges fast;
/// only the radial direction needs panel doubling.
fn convolved_component(kind: KernelKind, epsilon: f64, rho_radius: f64, t: f64) -> Result<f64> {
    let e = epsilon * rho_radius;
    let r_lo = (t - e).max(0.0);
    let r_hi = t + e;
    let d = kind.dim();
    if d > 3 {
        return Err(Error::InvalidConfig(
            "regularized tables support d = 2 or 3".into(),
        ));
    }
    let norm = bump_normalization(d);
    // rho_eps(y) = eps^{-d} rho(y/eps) with rho supported on |y| < eps r_rho.
    let rho_eps = |dist2: f64| -> f64 {
        let u2 = dist2 / (e * e);
        norm * bump_profile(u2) / e.powi(d as i32)
    };

    let rule = GaussRule::new(64);
    let tol = 1e-9 * kind.component_magnitude(e.min(t.max(e * 0.05)));

    // cos of the largest polar angle (measured from the evaluation direction)
    // still inside the mollifier support, at kernel radius r
    let cos_edge = |r: f64| -> f64 {
        if t * r == 0.0 {
            -1.0
        } else {
            ((t * t + r * r - e * e) / (2.0 * t * r)).max(-1.0)
        }
    };

    let value_at = |panels: usize| -> f64 {
        let mut acc = 0.0;
        let dr = (r_hi - r_lo) / panels as f64;
        for i in 0..panels {
            let a = r_lo + i as f64 * dr;
            acc += rule.integrate(a, a + dr, |r| {
                let ce = cos_edge(r);
                if ce >= 1.0 {
                    return 0.0;
                }
                match d {
                    2 => {
                        // integrand even in the angle; both the tangential
                        // (Biot-Savart) and radial kernels project with cos
                        let phi_edge = ce.acos();
                        2.0 * rule.integrate(0.0, phi_edge, |phi| {
                            let c = phi.cos();
                            let w = rho_eps(t * t + r * r - 2.0 * t * r * c);
                            kind.component_magnitude(r) * c * w * r
                        })
                    }
                    _ => {
                        // evaluation point on the polar axis; azimuthal
                        // symmetry integrates to 2 pi
                        rule.integrate(ce, 1.0, |mu| {
                            let w = rho_eps(t * t + r * r - 2.0 * t * r * mu);
                            kind.component_magnitude(r) * mu * w * r * r * 2.0 * PI
                        })
                    }
                }
            });
        }
        acc
    };

    let mut prev = value_at(1);
    let mut best_change = f64::INFINITY;
    for k in 1..=5 {
        let next = value_at(1 << k);
        best_change = (next - prev).abs();
        prev = next;
        if best_change < tol {
            return Ok(prev);
        }
    }
    Err(Error::QuadratureFailure {
        tol,
        best: best_change,
    })
}

fn bump_normalization(d: usize) -> f64 {
    crate::mollifiers::bump_normalization(d)
}

impl RegularizedKernel {
    /// Evaluate K_eps anywhere; finite everywhere including the origin.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.kind.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        let r2: f64 = x.iter().map(|xi| xi * xi).sum();
        let r = r2.sqrt();
        if r == 0.0 {
            return Ok(vec![0.0; d]);
        }
        if r >= self.table_extent {
            return eval_kernel(self.kind, x);
        }
        let b = self.profile_at(r);
        Ok(match self.kind {
            KernelKind::BiotSavart => vec![-b * x[1] / r, b * x[0] / r],
            _ => x.iter().map(|xi| b * xi / r).collect(),
        })
    }

    /// 2D fast path.
    pub fn eval2(&self, x: [f64; 2]) -> [f64; 2] {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        if r == 0.0 {
            return [0.0, 0.0];
        }
        if r >= self.table_extent {
            return eval_kernel2(self.kind, x);
        }
        let b = self.profile_at(r);
        match self.kind {
            KernelKind::BiotSavart => [-b * x[1] / r, b * x[0] / r],
            _ => [b * x[0] / r, b * x[1] / r],
        }
    }

    /// Catmull-Rom interpolation of the radial profile; the profile is odd,
    /// so the stencil mirrors with a sign flip at the origin.
    fn profile_at(&self, r: f64) -> f64 {
        let u = r / self.step;
        let i = (u as usize).min(self.profile.len() - 3);
        let t = u - i as f64;
        let pm1 = if i == 0 {
            -self.profile[1]
        } else {
            self.profile[i - 1]
        };
        let p0 = self.profile[i];
        let p1 = self.profile[i + 1];
        let p2 = self.profile[i + 2];
        let a = -0.5 * pm1 + 1.5 * p0 - 1.5 * p1 + 0.5 * p2;
        let b = pm1 - 2.5 * p0 + 2.0 * p1 - 0.5 * p2;
        let c = 0.5 * (p1 - pm1);
        ((a * t + b) * t + c) * t + p0
    }

    /// Sup norm of K_eps (attained on the radial table for these kernels).
    pub fn sup_norm(&self) -> f64 {
        self.profile.iter().fold(0.0f64, |m, b| m.max(b.abs()))
    }

    /// Radius of the mollified ball eps * r_rho.
    pub fn mollified_radius(&self) -> f64 {
        self.epsilon * self.rho_radius
    }

    pub fn table_extent(&self) -> f64 {
        self.table_extent
    }

    /// Export Cartesian samples of the near field as CSV rows
    /// (x_1,..,x_d, K_1,..,K_d); debugging aid, 2D kernels only.
    pub fn export_csv<W: std::io::Write>(&self, w: &mut W, samples_per_axis: usize) -> Result<()> {
        let d = self.kind.dim();
        if d != 2 {
            return Err(Error::InvalidConfig(
                "CSV export implemented for d = 2".into(),
            ));
        }
        writeln!(w, "x1,x2,K1,K2")?;
        let ext = self.table_extent;
        let h = 2.0 * ext / (samples_per_axis - 1) as f64;
        for i in 0..samples_per_axis {
            for j in 0..samples_per_axis {
                let x = [-ext + i as f64 * h, -ext + j as f64 * h];
                let k = self.eval2(x);
                writeln!(w, "{},{},{},{}", x[0], x[1], k[0], k[1])?;
            }
        }
        Ok(())
    }
}

/// Result of the sup-norm scaling check over a family of epsilons.
#[derive(Debug, Clone)]
pub struct SupNormReport {
    pub epsilons: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub fitted_exponent: f64,
    /// -d/p': the scaling exponent of the theoretical upper bound.
    pub bound_exponent: f64,
    /// Single constant C with max|K_eps| <= C eps^{-d/p'} over the range.
    pub bound_constant: f64,
    pub bound_satisfied: bool,
}

/// Fit the growth of max|K_eps| against epsilon and compare with the
/// C eps^{-d/p'} upper bound.
pub fn sup_norm_bound_check(
    kind: KernelKind,
    epsilons: &[f64],
    p: f64,
    rho_radius: f64,
    table_resolution: usize,
) -> Result<SupNormReport> {
    let mut sorted = epsilons.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup();
    if sorted.len() < 4 {
        return Err(Error::InsufficientPoints {
            needed: 4,
            got: sorted.len(),
        });
    }
    if sorted.iter().any(|&e| e <= 0.0 || e > 0.5) {
        return Err(Error::InvalidConfig("epsilons must lie in (0, 0.5]".into()));
    }

    let sup_norms: Vec<f64> = sorted
        .iter()
        .map(|&e| Ok(build_regularized(kind, e, rho_radius, table_resolution, p)?.sup_norm()))
        .collect::<Result<_>>()?;

    let fitted_exponent = crate::quad::loglog_slope(&sorted, &sup_norms);
    let d = kind.dim() as f64;
    let p_prime = p / (p - 1.0);
    let bound_exponent = -d / p_prime;
    let bound_constant = sorted
        .iter()
        .zip(&sup_norms)
        .map(|(e, s)| s * e.powf(d / p_prime))
        .fold(0.0f64, f64::max);
    Ok(SupNormReport {
        epsilons: sorted,
        sup_norms,
        fitted_exponent,
        bound_exponent,
        bound_constant,
        bound_satisfied: fitted_exponent >= bound_exponent - 1e-9,
    })
}
