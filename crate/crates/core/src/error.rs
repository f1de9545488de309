use thiserror::Error;

/// Errors produced by the numerical kernels and the run orchestration.
#[derive(Debug, Error)]
pub enum Error {
    /// Two objects that must live on the same grid do not.
    #[error("contract violation: {0}")]
    Contract(String),

    /// An input lies outside the domain of the operation (nonpositive density, t <= 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Unknown option, model name or norm kind.
    #[error("usage error: {0}")]
    Usage(String),

    /// An iterative solver ran out of iterations.
    #[error("no convergence after {iterations} iterations (last residual {residual:.3e}): {context}")]
    Convergence { context: String, iterations: usize, residual: f64 },

    /// Eigensolver failure, singular factorization, NaN, Cole-Hopf breakdown.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A discrete identity that holds by construction was found broken.
    #[error("internal invariant breach: {0}")]
    Invariant(String),

    /// The local stability condition does not hold, so rate predictions are unavailable.
    #[error("stability condition violated: eta = {eta:.6e}")]
    StabilityViolated { eta: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
