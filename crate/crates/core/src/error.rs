use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A denominator or argument left the domain where the model is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The discrete linear system is singular (or numerically so).
    #[error("solvability error: {0}")]
    Solvability(String),

    /// Newton iteration did not reach the residual tolerance.
    #[error("Newton iteration failed after {iterations} iterations (residual {residual:e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    /// The parameter set removes a mechanism a formula depends on (e.g. k1 = 0).
    #[error("degenerate model: {0}")]
    Degenerate(String),

    /// A standing hypothesis of the analysis does not hold.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("no sign change found for mode {n}: {trace}")]
    RootNotFound { n: u32, trace: String },

    #[error("unsupported mode n = {0}")]
    UnsupportedMode(u32),

    #[error("quadrature did not reach the requested accuracy: {0}")]
    Accuracy(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    /// Wraps another error with the (n, mu, epsilon) point at which it happened.
    #[error("at n = {n}, mu = {mu}, epsilon = {epsilon}: {source}")]
    AtPoint {
        n: u32,
        mu: f64,
        epsilon: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at(self, n: u32, mu: f64, epsilon: f64) -> Self {
        Error::AtPoint {
            n,
            mu,
            epsilon,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context wrappers.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::AtPoint { source, .. } => source.root_cause(),
            other => other,
        }
    }
}
