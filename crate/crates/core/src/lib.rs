//! Numerical laboratory for moderately interacting particle systems with
//! environmental noise.
//!
//! The crate simulates N-particle systems whose drift is a mollified
//! singular interaction (Biot-Savart, repulsive Poisson, Riesz gradients)
//! and whose randomness is a single divergence-free Kraichnan-type velocity
//! field shared by all particles. Mollified empirical measures of such
//! systems approach solutions of nonlinear Fokker-Planck equations; the
//! diagnostics here measure that approach at desk scale: kernel scaling
//! checks, covariance oracles, a pseudo-spectral solver for the limit
//! equation, and Monte Carlo convergence sweeps.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod grid;
pub mod kernels;
pub mod mollifiers;
pub mod noise;
pub mod particles;
pub mod pde;
pub mod quad;
pub mod rng;
pub mod runner;

pub use config::{validate, Experiment, RunConfig};
pub use error::{Error, Result};
pub use fields::{mollify, InitialDensity, Vn};
pub use grid::{GridField, GridSpec};
pub use kernels::{build_regularized, eval_kernel, KernelKind, RegularizedKernel};
pub use mollifiers::{eval_vn, max_beta, ModerateScaling, Mollifier};
pub use noise::{
    build_noise, covariance_quadrature, nu_theoretical, qn_lr_norm, sample_shared_increments,
    velocity_increment, Covariance, ModeIncrements, NoiseField,
};
pub use particles::{init_ensemble, simulate, ParticleEnsemble, SimConfig};
pub use pde::{heat_propagate, solve, KernelMode, PdeConfig};
pub use runner::{run, RunRecord};
