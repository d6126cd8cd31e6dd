use thiserror::Error;

/// Errors produced by the forward model and observation operators.
#[derive(Debug, Error)]
pub enum ModelError {
    /// A physical precondition was violated (out-of-domain coordinate,
    /// nonpositive conductivity, invalid parameter value, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Mismatched shapes, lengths or grids.
    #[error("layout error: {0}")]
    Layout(String),

    /// An iterative solver failed to reach its tolerance.
    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// A NaN or infinity appeared where a finite value was required.
    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;
