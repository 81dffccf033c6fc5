//! Experiment configuration: a declarative description of a run, validated
//! against the admissible parameter ranges before anything executes.
//!
//! Validation never stops at the first problem; it returns the full list of
//! violations so a config can be fixed in one pass.

use crate::error::{Error, Result};
use crate::fields::InitialDensity;
use crate::grid::GridSpec;
use crate::kernels::KernelKind;
use crate::mollifiers::max_beta;
use crate::particles::EngineKind;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Pde,
    Converge,
    NoiseCheck,
    CovDecay,
    Zconv,
    Zeta,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Pde => "pde",
            Experiment::Converge => "converge",
            Experiment::NoiseCheck => "noise-check",
            Experiment::CovDecay => "cov-decay",
            Experiment::Zconv => "zconv",
            Experiment::Zeta => "zeta",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    /// biot-savart | repulsive-poisson | riesz
    pub kind: String,
    #[serde(default = "default_d")]
    pub d: usize,
    /// normalization for the repulsive Poisson kernel; default 1/S_{d-1}
    pub c_d: Option<f64>,
    /// Riesz exponent
    pub s: Option<f64>,
    /// fixed mollification radius (exclusive with schedule_theta)
    pub epsilon: Option<f64>,
    /// epsilon(N) from the coupling schedule with this theta
    pub schedule_theta: Option<f64>,
    #[serde(default = "default_one")]
    pub rho_radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifierSection {
    pub beta: f64,
    #[serde(default = "default_m")]
    pub m: f64,
    #[serde(default = "default_m")]
    pub p: f64,
    #[serde(default = "default_one")]
    pub support_radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// couple the cutoff to the particle count: n_scale = log N
    #[serde(default = "default_true")]
    pub coupled: bool,
    #[serde(default)]
    pub n_scale: f64,
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// scales for the covariance-decay experiment
    pub n_scales: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticlesSection {
    pub n: Option<u64>,
    pub n_list: Option<Vec<u64>>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t")]
    pub t_final: f64,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    /// direct | grid | zero
    #[serde(default = "default_engine")]
    pub engine: String,
    /// gaussian | bump | gaussian-pair
    #[serde(default = "default_density")]
    pub density: String,
    #[serde(default = "default_one")]
    pub sigma: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_offset")]
    pub offset: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_grid_n")]
    pub n: usize,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_zeta_replicas")]
    pub zeta_replicas: usize,
    /// moment order of the covariance-decay experiment
    #[serde(default = "default_ell")]
    pub ell: f64,
    /// time at which force covariance is sampled
    #[serde(default = "default_sample_time")]
    pub sample_time: f64,
    /// estimate the stochastic convolution during converge runs
    #[serde(default)]
    pub estimate_z: bool,
    /// test separations for noise-check (flattened pairs)
    pub test_points: Option<Vec<[f64; 2]>>,
}

fn default_d() -> usize {
    2
}
fn default_one() -> f64 {
    1.0
}
fn default_m() -> f64 {
    4.0
}
fn default_true() -> bool {
    true
}
fn default_alpha() -> f64 {
    4.0
}
fn default_modes() -> usize {
    256
}
fn default_dt() -> f64 {
    1e-3
}
fn default_t() -> f64 {
    0.5
}
fn default_snapshots() -> usize {
    16
}
fn default_engine() -> String {
    "grid".into()
}
fn default_density() -> String {
    "gaussian".into()
}
fn default_radius() -> f64 {
    1.5
}
fn default_offset() -> f64 {
    0.75
}
fn default_grid_n() -> usize {
    128
}
fn default_half_width() -> f64 {
    8.0
}
fn default_replicas() -> usize {
    16
}
fn default_zeta_replicas() -> usize {
    32
}
fn default_ell() -> f64 {
    2.0
}
fn default_sample_time() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: Option<u64>,
    /// enforce the hypothesis range of beta (overridable on the CLI)
    #[serde(default = "default_true")]
    pub strict: bool,
    pub kernel: KernelSection,
    pub mollifier: MollifierSection,
    #[serde(default = "default_noise_section")]
    pub noise: NoiseSection,
    pub particles: ParticlesSection,
    #[serde(default = "default_grid_section")]
    pub grid: GridSection,
    #[serde(default = "default_run_section")]
    pub run: RunSection,
}

fn default_noise_section() -> NoiseSection {
    NoiseSection {
        enabled: true,
        alpha: default_alpha(),
        coupled: true,
        n_scale: 0.0,
        modes: default_modes(),
        n_scales: None,
    }
}

fn default_grid_section() -> GridSection {
    GridSection {
        n: default_grid_n(),
        half_width: default_half_width(),
    }
}

fn default_run_section() -> RunSection {
    RunSection {
        replicas: default_replicas(),
        zeta_replicas: default_zeta_replicas(),
        ell: default_ell(),
        sample_time: default_sample_time(),
        estimate_z: false,
        test_points: None,
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("config parse error: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Everything resolved and typed, ready for the runner.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub experiment: Experiment,
    pub seed: u64,
    pub strict: bool,
    pub kernel_kind: KernelKind,
    pub epsilon_rule: crate::diagnostics::EpsilonRule,
    pub rho_radius: f64,
    pub beta: f64,
    pub m: f64,
    pub p: f64,
    pub moll_support: f64,
    pub noise_enabled: bool,
    pub alpha: f64,
    pub coupled: bool,
    pub n_scale: f64,
    pub modes: usize,
    pub n_scales: Vec<f64>,
    pub n_list: Vec<u64>,
    pub dt: f64,
    pub t_final: f64,
    pub snapshots: usize,
    pub engine: EngineKind,
    pub density: InitialDensity,
    pub grid: GridSpec,
    pub replicas: usize,
    pub zeta_replicas: usize,
    pub ell: f64,
    pub sample_time: f64,
    pub estimate_z: bool,
    pub test_points: Vec<[f64; 2]>,
    /// echo of the raw config for the run record
    pub echo: RunConfig,
}

/// Validate a parsed config. Returns either the fully resolved config or the
/// complete list of violations.
pub fn validate(
    cfg: &RunConfig,
    seed_override: Option<u64>,
    strict_override: Option<bool>,
) -> std::result::Result<Resolved, Vec<String>> {
    let mut violations = Vec::new();
    let strict = strict_override.unwrap_or(cfg.strict);

    let seed = match seed_override.or(cfg.seed) {
        Some(s) => s,
        None => {
            violations.push(
                "seed missing: pass `seed` in the config or --seed (no environment entropy)".into(),
            );
            0
        }
    };

    // kernel
    let kernel_kind = match cfg.kernel.kind.as_str() {
        "biot-savart" => {
            if cfg.kernel.d != 2 {
                violations.push(format!(
                    "Biot-Savart kernel requires d = 2, got {}",
                    cfg.kernel.d
                ));
            }
            KernelKind::BiotSavart
        }
        "repulsive-poisson" => match cfg.kernel.c_d {
            Some(c) if c <= 0.0 => {
                violations.push(format!("C_d must be positive, got {c}"));
                KernelKind::repulsive_poisson(cfg.kernel.d.max(2))
            }
            Some(c) => KernelKind::RepulsivePoisson {
                d: cfg.kernel.d,
                c_d: c,
            },
            None => KernelKind::repulsive_poisson(cfg.kernel.d.max(2)),
        },
        "riesz" => {
            let s = cfg.kernel.s.unwrap_or(0.0);
            let kind = KernelKind::RieszGradient { d: cfg.kernel.d, s };
            if let Err(e) = kind.validate() {
                violations.push(e.to_string());
            }
            kind
        }
        other => {
            violations.push(format!(
                "unknown kernel kind '{other}' (expected biot-savart, repulsive-poisson or riesz)"
            ));
            KernelKind::BiotSavart
        }
    };

    let m = cfg.mollifier.m;
    let p = cfg.mollifier.p;
    if m <= 2.0 {
        violations.push(format!("moment order m must exceed 2, got {m}"));
    }
    if p <= 2.0 {
        violations.push(format!("integrability exponent p must exceed 2, got {p}"));
    }
    if p <= kernel_kind.min_p() {
        violations.push(format!(
            "p must exceed {} for this kernel (got p = {p})",
            kernel_kind.min_p()
        ));
    }

    // beta range
    let beta = cfg.mollifier.beta;
    if beta <= 0.0 || beta >= 1.0 {
        violations.push(format!("beta must lie in (0,1), got {beta}"));
    } else if m > 2.0 && p > 2.0 {
        let bounds = max_beta(m, 2, p).expect("validated exponents");
        if strict && beta > bounds.hypothesis + 1e-15 {
            violations.push(format!(
                "strict mode: beta = {beta} exceeds 1/(4m(d+2)) = {}",
                bounds.hypothesis
            ));
        }
    }
    if cfg.mollifier.support_radius <= 0.0 {
        violations.push("mollifier support radius must be positive".into());
    }

    // epsilon rule
    let epsilon_rule = match (cfg.kernel.epsilon, cfg.kernel.schedule_theta) {
        (Some(e), None) => {
            if e <= 0.0 {
                violations.push(format!("epsilon must be positive, got {e}"));
            }
            crate::diagnostics::EpsilonRule::Fixed(e)
        }
        (None, Some(theta)) => {
            if theta <= 0.0 {
                violations.push(format!("schedule theta must be positive, got {theta}"));
            }
            crate::diagnostics::EpsilonRule::Schedule { theta }
        }
        (Some(_), Some(_)) => {
            violations.push("set either kernel.epsilon or kernel.schedule_theta, not both".into());
            crate::diagnostics::EpsilonRule::Fixed(0.2)
        }
        (None, None) => crate::diagnostics::EpsilonRule::Schedule { theta: 1.0 },
    };
    if cfg.kernel.rho_radius <= 0.0 {
        violations.push("kernel rho_radius must be positive".into());
    }

    // noise
    if cfg.noise.alpha <= 2.0 {
        violations.push(format!(
            "spectral exponent alpha must exceed 2, got {}",
            cfg.noise.alpha
        ));
    }
    if cfg.noise.enabled && cfg.noise.modes < 16 {
        violations.push(format!(
            "need at least 16 noise modes, got {}",
            cfg.noise.modes
        ));
    }

    // particles
    let n_list = match (&cfg.particles.n, &cfg.particles.n_list) {
        (Some(n), None) => vec![*n],
        (None, Some(list)) if !list.is_empty() => list.clone(),
        (Some(_), Some(_)) => {
            violations.push("set either particles.n or particles.n_list, not both".into());
            vec![64]
        }
        _ => {
            violations.push("particle count missing: set particles.n or particles.n_list".into());
            vec![64]
        }
    };
    if n_list.contains(&0) {
        violations.push("particle counts must be positive".into());
    }
    if cfg.particles.dt <= 0.0 {
        violations.push(format!("dt must be positive, got {}", cfg.particles.dt));
    }
    if cfg.particles.t_final < 0.0 {
        violations.push("t_final must be nonnegative".into());
    }
    if cfg.particles.snapshots == 0 {
        violations.push("need at least one snapshot interval".into());
    }
    let engine = match cfg.particles.engine.as_str() {
        "direct" => EngineKind::Direct,
        "grid" => EngineKind::Grid,
        "zero" => EngineKind::Zero,
        other => {
            violations.push(format!(
                "unknown engine '{other}' (expected direct, grid or zero)"
            ));
            EngineKind::Grid
        }
    };
    let density = match cfg.particles.density.as_str() {
        "gaussian" => InitialDensity::Gaussian {
            sigma: cfg.particles.sigma,
        },
        "bump" => InitialDensity::Bump {
            radius: cfg.particles.radius,
        },
        "gaussian-pair" => InitialDensity::GaussianPair {
            offset: cfg.particles.offset,
            sigma: cfg.particles.sigma,
        },
        other => {
            violations.push(format!(
                "unknown density '{other}' (expected gaussian, bump or gaussian-pair)"
            ));
            InitialDensity::Gaussian { sigma: 1.0 }
        }
    };
    if cfg.particles.sigma <= 0.0 {
        violations.push("density sigma must be positive".into());
    }

    // grid
    let grid = match GridSpec::new(cfg.grid.n, cfg.grid.half_width) {
        Ok(g) => g,
        Err(e) => {
            violations.push(e.to_string());
            GridSpec::new(128, 8.0).unwrap()
        }
    };

    // run section
    if cfg.run.replicas == 0 {
        violations.push("replicas must be >= 1".into());
    }
    if cfg.run.zeta_replicas < 32 {
        violations.push(format!(
            "zeta_replicas must be >= 32, got {}",
            cfg.run.zeta_replicas
        ));
    }
    if cfg.run.ell < 2.0 {
        violations.push(format!(
            "covariance moment ell must be >= 2, got {}",
            cfg.run.ell
        ));
    }
    if cfg.experiment == Experiment::CovDecay && cfg.run.replicas < 256 {
        violations.push(format!(
            "cov-decay needs >= 256 replicas, got {}",
            cfg.run.replicas
        ));
    }

    if !violations.is_empty() {
        return Err(violations);
    }

    let default_points: Vec<[f64; 2]> = (0..20)
        .map(|k| {
            let ang = 2.0 * std::f64::consts::PI * (k % 10) as f64 / 10.0;
            let r = if k < 10 { 0.7 } else { 2.1 };
            [r * ang.cos(), r * ang.sin()]
        })
        .collect();

    Ok(Resolved {
        experiment: cfg.experiment,
        seed,
        strict,
        kernel_kind,
        epsilon_rule,
        rho_radius: cfg.kernel.rho_radius,
        beta,
        m,
        p,
        moll_support: cfg.mollifier.support_radius,
        noise_enabled: cfg.noise.enabled,
        alpha: cfg.noise.alpha,
        coupled: cfg.noise.coupled,
        n_scale: cfg.noise.n_scale,
        modes: cfg.noise.modes,
        n_scales: cfg
            .noise
            .n_scales
            .clone()
            .unwrap_or_else(|| vec![0.0, 0.5, 1.0, 1.5]),
        n_list,
        dt: cfg.particles.dt,
        t_final: cfg.particles.t_final,
        snapshots: cfg.particles.snapshots,
        engine,
        density,
        grid,
        replicas: cfg.run.replicas,
        zeta_replicas: cfg.run.zeta_replicas,
        ell: cfg.run.ell,
        sample_time: cfg.run.sample_time,
        estimate_z: cfg.run.estimate_z,
        test_points: cfg.run.test_points.clone().unwrap_or(default_points),
        echo: cfg.clone(),
    })
}
