//! Two-level quantum annealing with mid-anneal pausing: schedules, Ohmic bath calculus,
//! adiabatic-frame models, master-equation solvers, and closed-form pause analysis.

pub mod analytic;
pub mod bath;
pub mod error;
pub mod frames;
pub mod interp;
pub mod ode;
pub mod quad;
pub mod schedules;
pub mod solvers;
pub mod spin;
pub mod units;

pub use error::{Error, Result};
