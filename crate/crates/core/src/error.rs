use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite quadrature integrand at node {node} (x = {x}, t = {t})")]
    Quadrature { node: usize, x: f64, t: f64 },

    #[error(
        "cholesky failed at maximum jitter {jitter:e} (dim {dim}); smallest eigenvalue estimate {min_eigenvalue:e}"
    )]
    Factorization {
        dim: usize,
        jitter: f64,
        min_eigenvalue: f64,
    },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("non-finite position for particle {particle} at t = {t}")]
    NonFinitePosition { particle: usize, t: f64 },

    #[error("root bracketing failed: {0}")]
    Bracket(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
