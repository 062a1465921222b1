use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A potential, forward map, or density produced a non-finite value.
    #[error("non-finite evaluation at x = {x:?}: {what}")]
    Evaluation { x: Vec<f64>, what: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A caller broke a documented precondition (e.g. non-symmetric tensor).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Terminal Hessian of the MAP search is not positive definite.
    #[error("saddle or indefinite Hessian at terminal point (smallest eigenvalue {min_eig:e})")]
    Indefinite { min_eig: f64, x: Vec<f64> },

    #[error("Newton iteration did not converge in {iterations} iterations (|grad| = {grad_norm:e})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        last: Vec<f64>,
    },

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("quadrature did not converge: partial value {partial:e}, error estimate {err:e}")]
    Quadrature { partial: f64, err: f64 },

    #[error("unknown catalog problem `{0}`")]
    UnknownProblem(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn eval(x: &nalgebra::DVector<f64>, what: impl Into<String>) -> Self {
        Error::Evaluation {
            x: x.iter().copied().collect(),
            what: what.into(),
        }
    }
}
