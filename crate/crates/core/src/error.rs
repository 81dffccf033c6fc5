use thiserror::Error;

/// Errors for kernel construction, noise synthesis, simulation and experiments.
#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel evaluated at the origin")]
    ZeroPoint,

    #[error("dimension mismatch: kernel has d={expected}, point has d={got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("adaptive quadrature failed to converge to {tol:e} (best {best:e})")]
    QuadratureFailure { tol: f64, best: f64 },

    #[error("need at least {needed} distinct points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("invalid exponents: require m > 2 and p > 2 (m={m}, p={p})")]
    InvalidExponents { m: f64, p: f64 },

    #[error("spectral exponent must exceed 2, got alpha={0}")]
    InvalidAlpha(f64),

    #[error("spectral tail {tail:e} exceeds {frac:e} of the covariance scale")]
    TailTruncation { tail: f64, frac: f64 },

    #[error("covariance box too small: boundary value {boundary:e} exceeds {limit:e}")]
    BoxTooSmall { boundary: f64, limit: f64 },

    #[error("pairwise displacement or position outside the tabulated box (|x| up to {seen}, extent {extent})")]
    OutOfTable { seen: f64, extent: f64 },

    #[error("grid spacing {h} does not resolve the scale {scale} (need >= {cells} cells)")]
    ResolutionError { h: f64, scale: f64, cells: usize },

    #[error("non-finite particle position at step {step}")]
    NonFinite { step: usize },

    #[error("mollified measure lost mass: quadrature mass {mass}")]
    MassLeak { mass: f64 },

    #[error("solution blew up at t={time} (sup {sup:e} exceeded threshold)")]
    BlowUp { time: f64, sup: f64 },

    #[error("zeta must lie in (0,1), got {0}")]
    InvalidZeta(f64),

    #[error("Duhamel quadrature too coarse: halving snapshot density changes Z by {change:.1}%")]
    QuadratureTooCoarse { change: f64 },

    #[error("simulation failed at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
