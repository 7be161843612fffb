use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate jacobian at t = {t}: |m'(t)| = {speed:.3e} < 1e-12")]
    DegenerateJacobian { t: f64, speed: f64 },

    #[error("grid too small: need at least {needed} nodes, got {got}")]
    GridTooSmall { needed: usize, got: usize },

    #[error("field is not tangent: max |P_n u| = {max_normal:.3e}")]
    NotTangent { max_normal: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("step {h} leaves fewer than 4 spline intervals on [{a}, {b}]")]
    TooFewKnots { h: f64, a: f64, b: f64 },

    #[error("spline lost regularity at t = {t}: |m_h'(t)| = {speed:.3e}")]
    RegularityLost { t: f64, speed: f64 },

    #[error("curves too close: sampled min distance {dist:.3e} < {min:.3e}")]
    CurvesTooClose { dist: f64, min: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("assembled system contains non-finite entries: {0}")]
    NonFinite(String),

    #[error("linear solver failed: {0}")]
    SolverFailure(String),

    #[error("clean signal has zero norm but nsr > 0")]
    ZeroSignalNoise,

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
