//! The moderate-interaction potential V^N(x) = N^{d beta} V(N^beta x) and
//! the admissible range of the concentration exponent beta.
//!
//! V (and the kernel mollifier rho) are the standard radial bump
//! c exp(-1/(1-|x|^2)) on |x| < 1, rescaled to the requested support radius.

use crate::error::{Error, Result};
use crate::quad::{integrate_adaptive, unit_sphere_area, GaussRule};
use std::sync::OnceLock;

/// Unnormalized bump as a function of |x|^2 (support radius 1).
#[inline]
pub fn bump_profile(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

/// Normalization constant making the unit-radius bump a probability density
/// in dimension d.
pub fn bump_normalization(d: usize) -> f64 {
    static CACHE: OnceLock<[f64; 4]> = OnceLock::new();
    let cache = CACHE.get_or_init(|| {
        let mut c = [0.0; 4];
        for (i, dd) in (1..=4).enumerate() {
            let rule = GaussRule::new(64);
            let (mass, _) = integrate_adaptive(&rule, 0.0, 1.0, 1e-15, 10, |r| {
                bump_profile(r * r) * r.powi(dd as i32 - 1)
            });
            c[i] = 1.0 / (unit_sphere_area(dd) * mass);
        }
        c
    });
    cache[d - 1]
}

/// A compactly supported smooth probability density.
#[derive(Debug, Clone, Copy)]
pub struct Mollifier {
    pub d: usize,
    pub support_radius: f64,
    pub normalization: f64,
}

impl Mollifier {
    pub fn standard(d: usize, support_radius: f64) -> Self {
        assert!(support_radius > 0.0);
        // scale the unit bump: the normalization absorbs radius^d
        let normalization = bump_normalization(d) / support_radius.powi(d as i32);
        Mollifier {
            d,
            support_radius,
            normalization,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        let r2: f64 = x.iter().map(|xi| xi * xi).sum();
        self.eval_r2(r2)
    }

    /// Evaluate from the squared radius (hot path in grid deposition).
    #[inline]
    pub fn eval_r2(&self, r2: f64) -> f64 {
        self.normalization * bump_profile(r2 / (self.support_radius * self.support_radius))
    }

    /// Quadrature of the density over R^d (radial), for mass checks.
    pub fn mass(&self) -> f64 {
        let rule = GaussRule::new(64);
        let (m, _) = integrate_adaptive(&rule, 0.0, self.support_radius, 1e-14, 10, |r| {
            self.eval_r2(r * r) * r.powi(self.d as i32 - 1)
        });
        unit_sphere_area(self.d) * m
    }

    /// L^p norm over R^d by radial quadrature.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let rule = GaussRule::new(64);
        let (m, _) = integrate_adaptive(&rule, 0.0, self.support_radius, 1e-14, 10, |r| {
            self.eval_r2(r * r).powf(p) * r.powi(self.d as i32 - 1)
        });
        (unit_sphere_area(self.d) * m).powf(1.0 / p)
    }
}

/// Moderate-interaction scaling: how fast V^N concentrates with N.
#[derive(Debug, Clone, Copy)]
pub struct ModerateScaling {
    pub beta: f64,
    pub n: u64,
    /// moment/integrability order m > 2
    pub m: f64,
    /// integrability exponent p > 2
    pub p: f64,
}

impl ModerateScaling {
    /// `strict` enforces the hypothesis range 0 < beta <= 1/(4m(d+2)).
    pub fn new(beta: f64, n: u64, m: f64, p: f64, d: usize, strict: bool) -> Result<Self> {
        if m <= 2.0 || p <= 2.0 {
            return Err(Error::InvalidExponents { m, p });
        }
        if beta <= 0.0 || beta >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "beta must lie in (0,1), got {beta}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidConfig("particle count must be >= 1".into()));
        }
        if strict {
            let cap = max_beta(m, d, p)?.hypothesis;
            if beta > cap + 1e-15 {
                return Err(Error::InvalidConfig(format!(
                    "strict mode: beta = {beta} exceeds 1/(4m(d+2)) = {cap}"
                )));
            }
        }
        Ok(ModerateScaling { beta, n, m, p })
    }

    /// N^{-beta}: the factor by which the support of V^N shrinks.
    pub fn support_shrink(&self) -> f64 {
        (self.n as f64).powf(-self.beta)
    }
}

/// V^N(x) = N^{d beta} V(N^beta x).
pub fn eval_vn(moll: &Mollifier, scaling: &ModerateScaling, x: &[f64]) -> f64 {
    let nb = (scaling.n as f64).powf(scaling.beta);
    let r2: f64 = x.iter().map(|xi| xi * xi).sum();
    nb.powi(moll.d as i32) * moll.eval_r2(nb * nb * r2)
}

/// Admissible upper bounds for beta.
#[derive(Debug, Clone, Copy)]
pub struct MaxBeta {
    /// 1/(4m(d+2)): the hypothesis range.
    pub hypothesis: f64,
    /// 1/(2md + 16 + 2md max(1-2/p, 2/m)): the slightly larger range.
    pub extended: f64,
}

pub fn max_beta(m: f64, d: usize, p: f64) -> Result<MaxBeta> {
    if m <= 2.0 || p <= 2.0 {
        return Err(Error::InvalidExponents { m, p });
    }
    if d < 2 {
        return Err(Error::InvalidConfig("dimension must be >= 2".into()));
    }
    let df = d as f64;
    let hypothesis = 1.0 / (4.0 * m * (df + 2.0));
    let extended = 1.0 / (2.0 * m * df + 16.0 + 2.0 * m * df * (1.0 - 2.0 / p).max(2.0 / m));
    Ok(MaxBeta {
        hypothesis,
        extended,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_has_unit_mass() {
        for d in [2, 3] {
            let v = Mollifier::standard(d, 1.0);
            assert!((v.mass() - 1.0).abs() < 1e-10, "d={d}: {}", v.mass());
        }
        let scaled = Mollifier::standard(2, 0.35);
        assert!((scaled.mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn vn_reduces_to_v_at_n_one() {
        let v = Mollifier::standard(2, 1.0);
        let s = ModerateScaling::new(1.0 / 64.0, 1, 4.0, 4.0, 2, true).unwrap();
        for x in [[0.0, 0.0], [0.3, 0.1], [0.9, 0.2]] {
            assert_eq!(eval_vn(&v, &s, &x), v.eval(&x));
        }
    }

    #[test]
    fn vn_mass_preserved_and_support_shrinks() {
        let v = Mollifier::standard(2, 1.0);
        let rule = GaussRule::new(64);
        for n in [16u64, 256, 4096] {
            let s = ModerateScaling::new(1.0 / 64.0, n, 4.0, 4.0, 2, true).unwrap();
            // radial quadrature of V^N
            let (mass, _) = integrate_adaptive(&rule, 0.0, 1.0, 1e-13, 12, |r| {
                eval_vn(&v, &s, &[r, 0.0]) * r
            });
            assert!(
                (mass * 2.0 * std::f64::consts::PI - 1.0).abs() < 1e-8,
                "n={n}: {mass}"
            );
            // vanishes past the shrunken support
            let edge = s.support_shrink() * v.support_radius;
            assert_eq!(eval_vn(&v, &s, &[edge * 1.0001, 0.0]), 0.0);
            assert!(eval_vn(&v, &s, &[edge * 0.98, 0.0]) > 0.0);
        }
        // d=2, beta=1/64, N=4096: support shrinks by 4096^{-1/64}
        let s = ModerateScaling::new(1.0 / 64.0, 4096, 4.0, 4.0, 2, true).unwrap();
        assert!((s.support_shrink() - 0.8780).abs() < 5e-4);
    }

    #[test]
    fn vn_lp_growth_matches_change_of_variables() {
        let v = Mollifier::standard(2, 1.0);
        let p = 4.0;
        let base = v.lp_norm(p);
        let rule = GaussRule::new(64);
        for n in [16u64, 256] {
            let s = ModerateScaling::new(1.0 / 64.0, n, 4.0, p, 2, true).unwrap();
            let (int_p, _) = integrate_adaptive(&rule, 0.0, 1.0, 1e-13, 12, |r| {
                eval_vn(&v, &s, &[r, 0.0]).powf(p) * r
            });
            let norm = (int_p * 2.0 * std::f64::consts::PI).powf(1.0 / p);
            let expected = (n as f64).powf(2.0 * s.beta * (1.0 - 1.0 / p)) * base;
            assert!(
                (norm / expected - 1.0).abs() < 1e-6,
                "n={n}: {norm} vs {expected}"
            );
        }
    }

    #[test]
    fn beta_bounds() {
        let b = max_beta(4.0, 2, 4.0).unwrap();
        assert!((b.hypothesis - 1.0 / 64.0).abs() < 1e-15);
        assert!((b.extended - 0.025).abs() < 1e-15);
        assert!(matches!(
            max_beta(2.0, 2, 4.0),
            Err(Error::InvalidExponents { .. })
        ));
        assert!(matches!(
            max_beta(4.0, 2, 1.5),
            Err(Error::InvalidExponents { .. })
        ));
        // monotone decay in m
        assert!(max_beta(16.0, 2, 4.0).unwrap().hypothesis < b.hypothesis);
    }

    #[test]
    fn hypothesis_range_below_extended_range() {
        for m in [2.5, 3.0, 4.0, 8.0, 20.0] {
            for d in [2usize, 3, 4] {
                for p in [2.5, 3.0, 4.0, 10.0] {
                    let b = max_beta(m, d, p).unwrap();
                    assert!(b.hypothesis < b.extended, "m={m} d={d} p={p}");
                }
            }
        }
    }

    #[test]
    fn strict_mode_rejects_large_beta() {
        assert!(ModerateScaling::new(0.1, 64, 4.0, 4.0, 2, true).is_err());
        assert!(ModerateScaling::new(0.1, 64, 4.0, 4.0, 2, false).is_ok());
    }
}
