use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Evaluation point outside the domain of a function (e.g. coincident particles).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid parameter value.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A numerical routine did not reach its target accuracy.
    #[error("numerical accuracy: {what} achieved {achieved:.3e}, required {required:.3e}")]
    Accuracy {
        what: &'static str,
        achieved: f64,
        required: f64,
    },

    /// Population leaked to the edge of a truncated Fock basis.
    #[error("truncation leak: boundary population {population:.3e} exceeds {threshold:.3e} at t = {time:.4e}")]
    TruncationLeak {
        population: f64,
        threshold: f64,
        time: f64,
    },

    /// A matrix that must be positive semidefinite is not.
    #[error("not positive semidefinite: {what} (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositive {
        what: &'static str,
        min_eigenvalue: f64,
    },

    /// No feed-forward measurement rate keeps the residual diffusion positive.
    #[error("feed-forward infeasible: {reason} (feasible measurement rates [{lower:.6e}, {upper:.6e}])")]
    Infeasible {
        reason: String,
        lower: f64,
        upper: f64,
    },

    #[error("step size underflow at t = {time:.6e} (h = {step:.3e})")]
    StepSize { time: f64, step: f64 },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
