use thiserror::Error;

/// Failures raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{name} = {value} is outside {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("quadrature did not converge on [{a}, {b}]: estimate {estimate:e}, error {error:e}")]
    Quadrature {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
    },

    #[error("step size underflow at tau = {tau}: h = {step:e} after {steps} steps")]
    Stiffness { tau: f64, step: f64, steps: usize },

    #[error("unflagged degeneracy at s = {s}: gap {gap:e}")]
    Degenerate { s: f64, gap: f64 },

    #[error("two-level truncation invalid: worst margin {margin:e} at s = {s}")]
    Truncation { s: f64, margin: f64 },

    #[error("epsilon is singular: relaxation-rate slope vanishes at s = {s}; shift the end point")]
    SingularEpsilon { s: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
