//! Conversions between lab units (cyclic GHz, mK) and the internal rad/ns, ns system.

use std::f64::consts::PI;

/// k_B / hbar in rad ns^-1 mK^-1.
pub const KB_OVER_HBAR: f64 = 0.130_920_3;

pub fn ghz_to_rad_per_ns(f: f64) -> f64 {
    2.0 * PI * f
}

pub fn rad_per_ns_to_ghz(w: f64) -> f64 {
    w / (2.0 * PI)
}

/// Inverse temperature in ns/rad for a temperature in mK.
pub fn beta_from_mk(t_mk: f64) -> f64 {
    1.0 / (KB_OVER_HBAR * t_mk)
}

pub fn mk_from_beta(beta: f64) -> f64 {
    1.0 / (KB_OVER_HBAR * beta)
}
