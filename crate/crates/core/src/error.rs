use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid arguments: out-of-range sites, mismatched bases, bad parameters.
    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "eigendecomposition of {dim}x{dim} matrix failed: norm {norm:.6e}, \
         condition estimate {condition:.6e}, residual {residual:.6e}"
    )]
    Eigen {
        dim: usize,
        norm: f64,
        condition: f64,
        residual: f64,
    },

    #[error("integrator step underflow at tolerance {tolerance:.3e}; last stable step {last_stable_step:.6e}")]
    StepUnderflow {
        last_stable_step: f64,
        tolerance: f64,
    },

    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::Domain(_))
    }
}
