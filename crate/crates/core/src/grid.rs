//! Uniform periodic grids on the square [-L, L)^2, scalar and vector fields,
//! quadrature norms, plug-in entropy and the FFT engine behind all spectral
//! operations.
//!
//! The box emulates free space: experiments choose L so that the fields and
//! particles stay far enough from the boundary that the periodic images are
//! below every tolerance in play.

use crate::error::{Error, Result};
use crate::quad::pairwise_sum;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::io::{Read, Write};
use std::sync::Arc;

/// Node layout: x_i = -L + i h with h = 2L/n; values stored row-major as
/// values[iy * n + ix].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n: usize,
    pub half_width: f64,
}

impl GridSpec {
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if !n.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "grid resolution must be a power of two, got {n}"
            )));
        }
        if half_width <= 0.0 {
            return Err(Error::InvalidConfig(
                "box half-width must be positive".into(),
            ));
        }
        Ok(GridSpec { n, half_width })
    }

    #[inline]
    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        let h = self.h();
        h * h
    }

    #[inline]
    pub fn node(&self, ix: usize, iy: usize) -> [f64; 2] {
        let h = self.h();
        [
            -self.half_width + ix as f64 * h,
            -self.half_width + iy as f64 * h,
        ]
    }

    /// Physical wavenumber for FFT index i (Nyquist kept positive).
    #[inline]
    pub fn wavenumber(&self, i: usize) -> f64 {
        let m = if i <= self.n / 2 {
            i as f64
        } else {
            i as f64 - self.n as f64
        };
        std::f64::consts::PI / self.half_width * m
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        x[0].abs() <= self.half_width && x[1].abs() <= self.half_width
    }
}

/// Scalar field sampled on the grid.
#[derive(Debug, Clone)]
pub struct GridField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros(spec: GridSpec) -> Self {
        GridField {
            spec,
            values: vec![0.0; spec.n * spec.n],
        }
    }

    pub fn from_fn<F: Fn([f64; 2]) -> f64>(spec: GridSpec, f: F) -> Self {
        let n = spec.n;
        let mut values = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                values.push(f(spec.node(ix, iy)));
            }
        }
        GridField { spec, values }
    }

    pub fn mass(&self) -> f64 {
        pairwise_sum(&self.values) * self.spec.cell_area()
    }

    pub fn l1_norm(&self) -> f64 {
        let abs: Vec<f64> = self.values.iter().map(|v| v.abs()).collect();
        pairwise_sum(&abs) * self.spec.cell_area()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        let powed: Vec<f64> = self.values.iter().map(|v| v.abs().powf(p)).collect();
        (pairwise_sum(&powed) * self.spec.cell_area()).powf(1.0 / p)
    }

    /// Norm of the intersection space L^1 and L^p: the max of the two norms.
    pub fn l1lp_norm(&self, p: f64) -> f64 {
        self.l1_norm().max(self.lp_norm(p))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    /// Plug-in Boltzmann entropy INT f log f with 0 log 0 = 0; values below
    /// 1e-300 are clamped before the logarithm.
    pub fn entropy_plugin(&self) -> f64 {
        let terms: Vec<f64> = self
            .values
            .iter()
            .map(|&v| {
                if v <= 0.0 {
                    0.0
                } else {
                    v * v.max(1e-300).ln()
                }
            })
            .collect();
        pairwise_sum(&terms) * self.spec.cell_area()
    }

    /// self - other, elementwise (specs must match).
    pub fn sub(&self, other: &GridField) -> GridField {
        assert_eq!(self.spec, other.spec);
        GridField {
            spec: self.spec,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn export_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "x1,x2,value")?;
        let n = self.spec.n;
        for iy in 0..n {
            for ix in 0..n {
                let p = self.spec.node(ix, iy);
                writeln!(w, "{},{},{}", p[0], p[1], self.values[iy * n + ix])?;
            }
        }
        Ok(())
    }

    /// Binary layout: magic "MGF1", u32 d (=2), u32 n, f64 half_width, then
    /// row-major f64 little-endian values.
    pub fn export_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"MGF1")?;
        w.write_all(&2u32.to_le_bytes())?;
        w.write_all(&(self.spec.n as u32).to_le_bytes())?;
        w.write_all(&self.spec.half_width.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn import_binary<R: Read>(r: &mut R) -> Result<GridField> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"MGF1" {
            return Err(Error::InvalidConfig("bad field file magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != 2 {
            return Err(Error::InvalidConfig("only d = 2 fields supported".into()));
        }
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let half_width = f64::from_le_bytes(b8);
        let spec = GridSpec::new(n, half_width)?;
        let mut values = vec![0.0; n * n];
        for v in values.iter_mut() {
            r.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        Ok(GridField { spec, values })
    }
}

/// Two-component vector field on the grid with periodic bilinear sampling.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub spec: GridSpec,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(spec: GridSpec) -> Self {
        let len = spec.n * spec.n;
        VectorField {
            spec,
            x: vec![0.0; len],
            y: vec![0.0; len],
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .fold(0.0f64, |m, (a, b)| m.max((a * a + b * b).sqrt()))
    }

    /// Periodic bilinear interpolation at an arbitrary point.
    pub fn interp(&self, p: [f64; 2]) -> [f64; 2] {
        let n = self.spec.n;
        let h = self.spec.h();
        let fx = (p[0] + self.spec.half_width) / h;
        let fy = (p[1] + self.spec.half_width) / h;
        let ix = fx.floor();
        let iy = fy.floor();
        let tx = fx - ix;
        let ty = fy - iy;
        let wrap = |i: i64| -> usize { i.rem_euclid(n as i64) as usize };
        let (i0, i1) = (wrap(ix as i64), wrap(ix as i64 + 1));
        let (j0, j1) = (wrap(iy as i64), wrap(iy as i64 + 1));
        let idx = |i: usize, j: usize| j * n + i;
        let lerp = |v: &[f64]| -> f64 {
            let a = v[idx(i0, j0)] * (1.0 - tx) + v[idx(i1, j0)] * tx;
            let b = v[idx(i0, j1)] * (1.0 - tx) + v[idx(i1, j1)] * tx;
            a * (1.0 - ty) + b * ty
        };
        [lerp(&self.x), lerp(&self.y)]
    }
}

/// FFT workhorse: plans, wavenumbers and the dealiasing mask for one grid.
pub struct Spectral {
    pub spec: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// physical wavenumber per index
    pub xi: Vec<f64>,
    /// 2/3-rule mask per index (true = keep)
    keep: Vec<bool>,
}

impl Spectral {
    pub fn new(spec: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let n = spec.n;
        let xi: Vec<f64> = (0..n).map(|i| spec.wavenumber(i)).collect();
        let keep: Vec<bool> = (0..n)
            .map(|i| {
                let m = if i <= n / 2 {
                    i as i64
                } else {
                    i as i64 - n as i64
                };
                (m.unsigned_abs() as usize) <= n / 3
            })
            .collect();
        Spectral {
            spec,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            xi,
            keep,
        }
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.spec.n;
        // rows
        for row in data.chunks_exact_mut(n) {
            fft.process(row);
        }
        // columns via transpose
        let mut t = vec![Complex64::default(); n * n];
        for j in 0..n {
            for i in 0..n {
                t[i * n + j] = data[j * n + i];
            }
        }
        for row in t.chunks_exact_mut(n) {
            fft.process(row);
        }
        for j in 0..n {
            for i in 0..n {
                data[j * n + i] = t[i * n + j];
            }
        }
    }

    pub fn forward(&self, field: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    pub fn inverse(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spectrum, &self.inverse);
        let scale = 1.0 / (self.spec.n * self.spec.n) as f64;
        spectrum.iter().map(|c| c.re * scale).collect()
    }

    /// Multiply by the heat multiplier exp(-nu t |xi|^2) in place.
    pub fn apply_heat(&self, spectrum: &mut [Complex64], nu: f64, t: f64) {
        let n = self.spec.n;
        for j in 0..n {
            let k2y = self.xi[j] * self.xi[j];
            for i in 0..n {
                let k2 = self.xi[i] * self.xi[i] + k2y;
                spectrum[j * n + i] *= (-nu * t * k2).exp();
            }
        }
    }

    /// Spectral divergence: i xi . (vx, vy), Nyquist rows zeroed.
    pub fn divergence(&self, vx: &[Complex64], vy: &[Complex64]) -> Vec<Complex64> {
        let n = self.spec.n;
        let mut out = vec![Complex64::default(); n * n];
        for j in 0..n {
            let ky = self.deriv_wavenumber(j);
            for i in 0..n {
                let kx = self.deriv_wavenumber(i);
                let idx = j * n + i;
                out[idx] = Complex64::new(0.0, 1.0) * (kx * vx[idx] + ky * vy[idx]);
            }
        }
        out
    }

    /// Wavenumber for derivative multipliers: the Nyquist mode is zeroed so
    /// odd-order derivatives of real fields stay real.
    #[inline]
    pub fn deriv_wavenumber(&self, i: usize) -> f64 {
        if i == self.spec.n / 2 {
            0.0
        } else {
            self.xi[i]
        }
    }

    /// 2/3-rule truncation in place.
    pub fn dealias(&self, spectrum: &mut [Complex64]) {
        let n = self.spec.n;
        for j in 0..n {
            for i in 0..n {
                if !(self.keep[i] && self.keep[j]) {
                    spectrum[j * n + i] = Complex64::default();
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_layout_and_mass() {
        let spec = GridSpec::new(8, 4.0).unwrap();
        assert_eq!(spec.h(), 1.0);
        assert_eq!(spec.node(0, 0), [-4.0, -4.0]);
        assert_eq!(spec.node(4, 2), [0.0, -2.0]);
        let f = GridField::from_fn(spec, |_| 1.0);
        assert!((f.mass() - 64.0).abs() < 1e-12);
        assert!(GridSpec::new(12, 4.0).is_err());
    }

    #[test]
    fn norms_on_plateau() {
        // plateau of height 2 on a unit-area block: L1 = 2, L4 = 2 * 1^{1/4}
        let spec = GridSpec::new(64, 4.0).unwrap();
        let h = spec.h();
        let side = (1.0 / h).round() as usize;
        let mut f = GridField::zeros(spec);
        for iy in 0..side {
            for ix in 0..side {
                f.values[iy * spec.n + ix] = 2.0;
            }
        }
        assert!((f.l1_norm() - 2.0).abs() < 1e-12);
        assert!((f.lp_norm(4.0) - 2.0).abs() < 1e-12);
        assert!((f.l1lp_norm(4.0) - 2.0).abs() < 1e-12);
        let zero = GridField::zeros(spec);
        assert_eq!(zero.l1lp_norm(4.0), 0.0);
    }

    #[test]
    fn entropy_of_gaussian_and_uniform() {
        let spec = GridSpec::new(256, 8.0).unwrap();
        let sigma = 1.0f64;
        let g = GridField::from_fn(spec, |p| {
            (-(p[0] * p[0] + p[1] * p[1]) / (2.0 * sigma * sigma)).exp()
                / (2.0 * std::f64::consts::PI * sigma * sigma)
        });
        let want = -(2.0 * std::f64::consts::PI * std::f64::consts::E * sigma * sigma).ln();
        assert!(
            (g.entropy_plugin() - want).abs() < 1e-6,
            "{}",
            g.entropy_plugin()
        );

        // uniform density 1/|B| on a box of volume |B|
        let h = spec.h();
        let side = (2.0 / h).round() as usize;
        let vol = (side as f64 * h).powi(2);
        let mut u = GridField::zeros(spec);
        for iy in 0..side {
            for ix in 0..side {
                u.values[iy * spec.n + ix] = 1.0 / vol;
            }
        }
        assert!((u.entropy_plugin() + vol.ln()).abs() < 1e-12);
        // pointwise bound: f log f >= -1/e
        let floor: f64 = u
            .values
            .iter()
            .map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 })
            .fold(0.0, f64::min);
        assert!(floor >= -(1.0f64.exp().recip()) - 1e-12);
    }

    #[test]
    fn fft_roundtrip_and_derivative() {
        let spec = GridSpec::new(64, std::f64::consts::PI).unwrap();
        let sp = Spectral::new(spec);
        let f = GridField::from_fn(spec, |p| (3.0 * p[0]).sin() * (2.0 * p[1]).cos());
        let spectrum = sp.forward(&f.values);
        let back = sp.inverse(spectrum.clone());
        for (a, b) in f.values.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        // divergence of (f, 0) = d/dx f
        let zero = vec![Complex64::default(); spec.n * spec.n];
        let div = sp.inverse(sp.divergence(&spectrum, &zero));
        let want = GridField::from_fn(spec, |p| 3.0 * (3.0 * p[0]).cos() * (2.0 * p[1]).cos());
        for (a, b) in div.iter().zip(&want.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn binary_roundtrip() {
        let spec = GridSpec::new(16, 2.0).unwrap();
        let f = GridField::from_fn(spec, |p| p[0] + 2.0 * p[1]);
        let mut buf = Vec::new();
        f.export_binary(&mut buf).unwrap();
        let g = GridField::import_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(f.spec, g.spec);
        assert_eq!(f.values, g.values);
    }

    #[test]
    fn vector_interp_periodic() {
        let spec = GridSpec::new(32, 1.0).unwrap();
        let mut v = VectorField::zeros(spec);
        for iy in 0..32 {
            for ix in 0..32 {
                let p = spec.node(ix, iy);
                v.x[iy * 32 + ix] = p[0];
                v.y[iy * 32 + ix] = p[1];
            }
        }
        let got = v.interp([0.25, -0.5]);
        assert!((got[0] - 0.25).abs() < 1e-12);
        assert!((got[1] + 0.5).abs() < 1e-12);
    }
}
