use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance is singular: min eigenvalue {min_eig:e} <= 1e-12 * max eigenvalue {max_eig:e}")]
    SingularCovariance { min_eig: f64, max_eig: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate degrees of freedom: active count {active} >= n = {n}")]
    DegenerateDof { active: usize, n: usize },

    #[error("stale fit: subgradient max-norm {max_abs:.3e} exceeds 1 + kkt_tol")]
    StaleFit { max_abs: f64 },

    #[error("theta* has empty support")]
    EmptySupport,

    #[error("fixed point did not converge after {iterations} iterations (residuals {tau_residual:.3e}, {zeta_residual:.3e})")]
    FixedPointNonConvergence {
        iterations: usize,
        tau_residual: f64,
        zeta_residual: f64,
        trace: Vec<crate::fixed_point::TraceRow>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
