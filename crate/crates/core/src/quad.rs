//! Quadrature building blocks: Gauss-Legendre rules, adaptive panel
//! integration and order-fixed reductions used for deterministic output.

/// Gauss-Legendre nodes and weights on [-1, 1].
///
/// Computed by Newton iteration on the Legendre polynomial; accurate to
/// machine precision for the orders used here (<= 128).
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 2);
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-based initial guess for the i-th root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A fixed Gauss-Legendre rule mapped onto arbitrary intervals.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { nodes, weights }
    }

    /// Integrate `f` over [a, b] with the single panel.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let c = 0.5 * (a + b);
        let hw = 0.5 * (b - a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(c + hw * x);
        }
        acc * hw
    }

    pub fn nodes_weights(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let hw = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (c + hw * x, w * hw))
    }
}

/// Adaptive panel-doubling integration of `f` over [a, b].
///
/// Splits the interval into `2^k` uniform panels of a fixed Gauss rule and
/// doubles until two successive levels agree within `tol` (absolute).
/// Returns the refined value together with the last observed change.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    rule: &GaussRule,
    a: f64,
    b: f64,
    tol: f64,
    max_doublings: usize,
    f: F,
) -> (f64, f64) {
    let mut panels = 1usize;
    let mut prev = rule.integrate(a, b, &f);
    let mut change = f64::INFINITY;
    for _ in 0..max_doublings {
        panels *= 2;
        let h = (b - a) / panels as f64;
        let mut acc = 0.0;
        for i in 0..panels {
            acc += rule.integrate(a + i as f64 * h, a + (i + 1) as f64 * h, &f);
        }
        change = (acc - prev).abs();
        prev = acc;
        if change < tol {
            break;
        }
    }
    (prev, change)
}

/// Deterministic pairwise summation.
///
/// Fixed reduction order regardless of thread count, with better rounding
/// behaviour than a left fold on long arrays.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Least-squares slope and intercept of y against x.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Log-log least-squares slope; inputs must be positive.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly).0
}

/// Median of a sample (averaging the two central order statistics).
pub fn median(v: &[f64]) -> f64 {
    assert!(!v.is_empty());
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Interquartile range (linear-interpolation quantiles).
pub fn iqr(v: &[f64]) -> f64 {
    quantile(v, 0.75) - quantile(v, 0.25)
}

pub fn quantile(v: &[f64], q: f64) -> f64 {
    assert!(!v.is_empty());
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        s[lo]
    } else {
        s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
    }
}

/// Bessel function of the first kind, integer order.
///
/// Power series below x = 14, Hankel asymptotic expansion above, with the
/// expansion terms generated from their recurrence; absolute accuracy is
/// around 1e-10 over the orders used here (0, 1, 2).
pub fn bessel_j(n: usize, x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 14.0 {
        bessel_jn_series(n, x)
    } else {
        bessel_jn_asymptotic(n, x)
    }
}

fn bessel_jn_series(n: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=n {
        term *= half / k as f64;
    }
    let mut sum = term;
    let x2 = half * half;
    for k in 1..80 {
        term *= -x2 / (k as f64 * (n + k) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-30) {
            break;
        }
    }
    sum
}

fn bessel_jn_asymptotic(n: usize, x: f64) -> f64 {
    use std::f64::consts::PI;
    let mu = (4 * n * n) as f64;
    let inv = 1.0 / (8.0 * x);
    // P series terms from the A&S 9.2.9 ratio
    let mut p = 1.0;
    let mut term = 1.0;
    for k in 0..8 {
        let a = mu - ((4 * k + 1) as f64).powi(2);
        let b = mu - ((4 * k + 3) as f64).powi(2);
        let next = -term * a * b * inv * inv / ((2 * k + 1) as f64 * (2 * k + 2) as f64);
        if next.abs() >= term.abs() && k > 0 {
            break;
        }
        term = next;
        p += term;
    }
    // Q series (A&S 9.2.10)
    let mut q = (mu - 1.0) * inv;
    let mut qterm = q;
    for k in 0..8 {
        let a = mu - ((4 * k + 3) as f64).powi(2);
        let b = mu - ((4 * k + 5) as f64).powi(2);
        let next = -qterm * a * b * inv * inv / ((2 * k + 2) as f64 * (2 * k + 3) as f64);
        if next.abs() >= qterm.abs() {
            break;
        }
        qterm = next;
        q += qterm;
    }
    let chi = x - (2.0 * n as f64 + 1.0) * PI / 4.0;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Surface area of the unit sphere S^{d-1} in R^d.
pub fn unit_sphere_area(d: usize) -> f64 {
    use std::f64::consts::PI;
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => {
            // 2 pi^{d/2} / Gamma(d/2), via the half-integer Gamma recurrence.
            let mut g = if d.is_multiple_of(2) { 1.0 } else { PI.sqrt() };
            let mut x = if d.is_multiple_of(2) { 1.0 } else { 0.5 };
            while x < d as f64 / 2.0 - 1e-12 {
                g *= x;
                x += 1.0;
            }
            2.0 * PI.powf(d as f64 / 2.0) / g
        }
    }
}
