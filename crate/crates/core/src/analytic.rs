//! Closed-form pause analysis: the diabatic pulse, the paused relaxation formula for the
//! final ground-state population, pause-position optimization, and the sufficient
//! conditions for an interior optimum.

use std::f64::consts::{E, PI};

use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::frames::{AngleProfile, AnnealModel};
use crate::quad::{integrate, Tolerance};
use crate::schedules::{BoundaryAngle, PauseSpec};
use crate::spin::{real_op, Op};

/// Instantaneous rotation summarizing a narrow Landau-Zener crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiabaticPulse {
    /// Mixing angle in radians.
    pub phi: f64,
    /// Adiabatic timescale in ns.
    pub t_ad: f64,
    pub center: f64,
}

impl DiabaticPulse {
    /// `omega_integral` is the integral of the gap (rad/ns) from 0 to the pulse center.
    pub fn new(
        t_f: f64,
        alpha_theta: f64,
        omega_integral: f64,
        boundary: BoundaryAngle,
        center: f64,
    ) -> Result<Self> {
        for (name, v) in [("t_f", t_f), ("alpha_theta", alpha_theta), ("omega_integral", omega_integral)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain {
                    name,
                    value: v,
                    domain: "(0, inf)".into(),
                });
            }
        }
        // Gap integral taken in cyclic units.
        let t_ad = 2f64.sqrt() / (alpha_theta * omega_integral / (2.0 * PI));
        let phi = 0.5 * boundary.radians() * (-(t_f / t_ad).powi(2)).exp();
        Ok(Self { phi, t_ad, center })
    }

    /// Pulse of a Gaussian-progression model, integrating the gap up to the pulse center.
    pub fn for_model(model: &AnnealModel, t_f: f64) -> Result<Self> {
        let AngleProfile::Gaussian(angle) = &model.angle else {
            return Err(Error::Argument(
                "the diabatic pulse needs a Gaussian angular progression".into(),
            ));
        };
        let integral = integrate(|s| model.omega(s), 0.0, angle.center, Tolerance::default())?.value;
        Self::new(t_f, angle.width, integral, angle.boundary, angle.center)
    }

    /// `exp(-i phi Y)`.
    pub fn unitary(&self) -> Op {
        let (s, c) = self.phi.sin_cos();
        real_op(c, -s, s, c)
    }
}

/// Landau-Zener validity figure `4 alpha_theta t_f g^2 / tau_sb`; small values are safe.
pub fn lz_validity(tau_sb: f64, t_f: f64, alpha_theta: f64, g: f64) -> f64 {
    4.0 * alpha_theta * t_f * g * g / tau_sb
}

/// Ground population after the pulse, starting from ground population `p0`.
pub fn post_pulse_population(p0: f64, phi: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    p0 * c * c + (1.0 - p0) * s * s
}

/// Relaxation data entering the analytic population formula.
///
/// Rates are per unit dimensionless time, so `relaxation(s) = t_f * gamma(Omega(s)) * w(s)`
/// with `w` the summed squared off-diagonal coupling.
#[derive(Debug, Clone)]
pub struct PopulationModel {
    pub model: AnnealModel,
    pub bath: BathSpec,
    pub t_f: f64,
    /// Ground population right after the Landau-Zener window.
    pub p_phi: f64,
    /// Upper edge of the Landau-Zener window.
    pub start: f64,
    pub tol: Tolerance,
}

impl PopulationModel {
    pub fn new(model: AnnealModel, bath: BathSpec, t_f: f64, p_phi: f64, start: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_phi) {
            return Err(Error::Domain {
                name: "p_phi",
                value: p_phi,
                domain: "[0, 1]".into(),
            });
        }
        if !(start >= 0.0 && start < 1.0) {
            return Err(Error::Domain {
                name: "start",
                value: start,
                domain: "[0, 1)".into(),
            });
        }
        Ok(Self {
            model,
            bath,
            t_f,
            p_phi,
            start,
            tol: Tolerance {
                max_intervals: 10_000,
                ..Tolerance::new(1e-13, 1e-12)
            },
        })
    }

    /// Downward relaxation rate per unit dimensionless time.
    pub fn relaxation(&self, s: f64) -> f64 {
        self.t_f * self.bath.gamma(self.model.omega(s)) * self.model.relaxation_weight(s)
    }

    pub fn relaxation_derivative(&self, s: f64) -> f64 {
        let om = self.model.omega(s);
        let w = self.model.relaxation_weight(s);
        let dw = self.model.relaxation_weight_derivative(s);
        self.t_f
            * (self.bath.gamma_derivative(om) * self.model.omega_derivative(s) * w + self.bath.gamma(om) * dw)
    }

    /// Total transition rate `(1 + exp(-beta Omega)) relaxation`.
    pub fn total_rate(&self, s: f64) -> f64 {
        (1.0 + (-self.bath.beta * self.model.omega(s)).exp()) * self.relaxation(s)
    }

    pub fn total_rate_derivative(&self, s: f64) -> f64 {
        let boltz = (-self.bath.beta * self.model.omega(s)).exp();
        self.relaxation_derivative(s) * (1.0 + boltz)
            - self.bath.beta * self.model.omega_derivative(s) * boltz * self.relaxation(s)
    }

    pub fn thermal_population(&self, s: f64) -> f64 {
        self.bath.thermal_ground_population(self.model.omega(s))
    }

    fn rate_integral(&self, a: f64, b: f64) -> Result<f64> {
        Ok(integrate(|s| self.total_rate(s), a, b, self.tol)?.value)
    }

    fn check_position(&self, p: &PauseSpec) -> Result<()> {
        if p.duration > 0.0 && p.position < self.start {
            return Err(Error::Domain {
                name: "s_p",
                value: p.position,
                domain: format!("[{}, 1] (pause after the Landau-Zener window)", self.start),
            });
        }
        Ok(())
    }

    /// Weighted relaxation integral `int_a^b relaxation(s) exp(-int_s^b X) ds`.
    fn fed(&self, a: f64, b: f64) -> Result<f64> {
        let mut err = None;
        let v = integrate(
            |s| match self.rate_integral(s, b) {
                Ok(k) => self.relaxation(s) * (-k).exp(),
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            },
            a,
            b,
            self.tol,
        )?
        .value;
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }
}

/// Final ground-state population for a pause after the Landau-Zener window.
pub fn analytic_population(pm: &PopulationModel, p: &PauseSpec) -> Result<f64> {
    pm.check_position(p)?;
    let s_p = p.position.max(pm.start);
    let before = pm.rate_integral(pm.start, s_p)?;
    let x_p = pm.total_rate(s_p);
    let paused = p.duration * x_p;
    let after = pm.rate_integral(s_p, 1.0)?;
    let decay = pm.p_phi * (-(before + paused + after)).exp();
    let fed_a = pm.fed(pm.start, s_p)? * (-(paused + after)).exp();
    let fed_p = if x_p > 0.0 {
        pm.relaxation(s_p) * (-after).exp() * -(-paused).exp_m1() / x_p
    } else {
        0.0
    };
    let fed_c = pm.fed(s_p, 1.0)?;
    Ok(decay + fed_a + fed_p + fed_c)
}

/// Exact derivative of [`analytic_population`] with respect to the pause position.
pub fn pause_derivative(pm: &PopulationModel, s_p: f64, duration: f64) -> Result<f64> {
    let p = PauseSpec::new(s_p, duration)?;
    pm.check_position(&p)?;
    let x = pm.total_rate(s_p);
    let dx = pm.total_rate_derivative(s_p);
    let g = pm.relaxation(s_p);
    let dg = pm.relaxation_derivative(s_p);
    let big_s = duration * x;
    let after = pm.rate_integral(s_p, 1.0)?;
    let total = pm.rate_integral(pm.start, s_p)? + big_s + after;
    let fed_a = pm.fed(pm.start, s_p)? * (-(big_s + after)).exp();
    let bracket = if x > 0.0 {
        let one_minus = -(-big_s).exp_m1();
        // 1 - e^{-S}(1 + S), with a series for small S.
        let second = if big_s < 1e-4 {
            big_s * big_s / 2.0 - big_s.powi(3) / 3.0
        } else {
            1.0 - (-big_s).exp() * (1.0 + big_s)
        };
        dg * one_minus / x - g * dx * second / (x * x)
    } else {
        dg * duration
    };
    Ok(-pm.p_phi * duration * dx * (-total).exp() - duration * dx * fed_a + (-after).exp() * bracket)
}

/// Derivatives with respect to the pause position at the window edge and at the end.
pub fn endpoint_derivatives(pm: &PopulationModel, duration: f64) -> Result<(f64, f64)> {
    Ok((
        pause_derivative(pm, pm.start, duration)?,
        pause_derivative(pm, 1.0, duration)?,
    ))
}

/// Location of the best pause position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauseOptimum {
    pub position: f64,
    pub value: f64,
    /// Strictly inside the admissible interval and above both end values.
    pub interior: bool,
}

/// Grid argmax of the analytic population, refined by golden-section search.
pub fn optimize_pause(pm: &PopulationModel, duration: f64, grid: &[f64]) -> Result<PauseOptimum> {
    if grid.is_empty() {
        return Err(Error::Argument("pause grid is empty".into()));
    }
    let f = |sp: f64| PauseSpec::new(sp, duration).and_then(|p| analytic_population(pm, &p));
    let values = grid.iter().map(|&sp| f(sp)).collect::<Result<Vec<_>>>()?;
    let (k, _) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    if grid.len() == 1 {
        return Ok(PauseOptimum {
            position: grid[0],
            value: values[0],
            interior: false,
        });
    }
    let lo = pm.start;
    let (a, b) = if k == 0 {
        (grid[0], grid[1])
    } else if k == grid.len() - 1 {
        // A falling slope at the end means the maximum sits just inside.
        if grid[k] >= 1.0 && pause_derivative(pm, 1.0, duration)? >= 0.0 {
            (grid[k], grid[k])
        } else {
            (grid[k - 1], grid[k])
        }
    } else {
        (grid[k - 1], grid[k + 1])
    };
    let (position, value) = if b > a {
        golden_section(&f, a, b, 1e-9)?
    } else {
        (grid[k], values[k])
    };
    let (position, value) = if value >= values[k] {
        (position, value)
    } else {
        (grid[k], values[k])
    };
    let delta = 1e-6;
    let ends = [f(lo.max(grid[0].min(lo)))?, f(1.0)?];
    let interior = position > lo + delta && position < 1.0 - delta && ends.iter().all(|&e| value > e);
    Ok(PauseOptimum {
        position,
        value,
        interior,
    })
}

fn golden_section<F: Fn(f64) -> Result<f64>>(f: &F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

/// Lower real branch of the Lambert W function on [-1/e, 0).
pub fn lambert_w_minus1(z: f64) -> Result<f64> {
    let branch = -1.0 / E;
    if !(z < 0.0 && z >= branch - 4.0 * f64::EPSILON) {
        return Err(Error::Domain {
            name: "z",
            value: z,
            domain: "[-1/e, 0)".into(),
        });
    }
    if (z - branch).abs() <= 4.0 * f64::EPSILON {
        return Ok(-1.0);
    }
    let mut w = if z < -0.25 {
        // Series about the branch point in p = -sqrt(2 (1 + e z)).
        let p = -(2.0 * (1.0 + E * z)).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else {
        let l = (-z).ln();
        l - (-l).ln()
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        let next = (w - step).min(-1.0);
        if (next - w).abs() <= 1e-15 * w.abs() {
            w = next;
            break;
        }
        w = next;
    }
    Ok(w)
}

/// Positive root `S` of `(e^S - 1)/S = x` for `x > 1`; zero otherwise.
pub fn s_star(x: f64) -> f64 {
    if !(x > 1.0) {
        return 0.0;
    }
    let z = -(-1.0 / x).exp() / x;
    match lambert_w_minus1(z.max(-1.0 / E)) {
        Ok(w) => (-(1.0 + x * w) / x).max(0.0),
        Err(_) => 0.0,
    }
}

/// Ratio controlling how the end-of-anneal slope of the total rate compares with its
/// relaxation part.
pub fn epsilon(pm: &PopulationModel) -> Result<f64> {
    let slope = pm.relaxation_derivative(1.0);
    if slope == 0.0 || !slope.is_finite() {
        return Err(Error::SingularEpsilon { s: 1.0 });
    }
    let om = pm.model.omega(1.0);
    let beta = pm.bath.beta;
    let num = pm.relaxation(1.0) * beta * pm.model.omega_derivative(1.0);
    // 1 + e^{beta Omega} overflows only where epsilon is negligible anyway.
    Ok(num / (slope.abs() * (1.0 + (beta * om).exp())))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Check {
    pub pass: bool,
    /// Signed distance to the threshold; positive means satisfied.
    pub margin: f64,
}

impl Check {
    fn new(margin: f64) -> Self {
        Self {
            pass: margin > 0.0,
            margin,
        }
    }
}

/// Evaluation of the four sufficient conditions for an interior pause optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub duration: f64,
    pub c: f64,
    /// Both gap slopes positive, as the conditions presume.
    pub gap_rising: bool,
    pub decreasing_rate: Check,
    pub strong_after_gap: Check,
    pub weak_at_end: Check,
    pub subthermal: Check,
    pub x: f64,
    pub q: f64,
    pub s_star: f64,
    pub x_end: f64,
    pub lambda_star: f64,
    pub epsilon: Option<f64>,
    /// Weaker end-of-anneal condition with the relaxation rate in place of the total rate.
    pub weak_at_end_relaxed: Check,
    /// Condition three for other values of the free constant.
    pub c_sweep: Vec<(f64, bool)>,
    pub surrogate_after_gap: Check,
    pub surrogate_at_end: Check,
    pub derivative_start: f64,
    pub derivative_end: f64,
}

impl TheoremReport {
    pub fn all_pass(&self) -> bool {
        self.gap_rising
            && self.decreasing_rate.pass
            && self.strong_after_gap.pass
            && self.weak_at_end.pass
            && self.subthermal.pass
    }

    /// Interior optimum predicted by the conditions.
    pub fn predicts_interior(&self) -> bool {
        self.all_pass()
    }
}

/// Evaluates the four conditions with free constant `c > 1`.
pub fn check_assumptions(pm: &PopulationModel, duration: f64, c: f64) -> Result<TheoremReport> {
    if !(duration > 0.0) {
        return Err(Error::Domain {
            name: "s_d",
            value: duration,
            domain: "(0, inf)".into(),
        });
    }
    if !(c > 1.0) {
        return Err(Error::Domain {
            name: "c",
            value: c,
            domain: "(1, inf)".into(),
        });
    }
    let mu = pm.start;
    let gap_rising = pm.model.omega_derivative(mu) > 0.0 && pm.model.omega_derivative(1.0) > 0.0;

    let d_mu = pm.relaxation_derivative(mu);
    let d_end = pm.relaxation_derivative(1.0);
    let decreasing_rate = Check::new(-d_mu.max(d_end));

    let p_th_mu = pm.thermal_population(mu);
    let q = d_mu / (pm.total_rate_derivative(mu) * p_th_mu);
    let x = (1.0 - pm.p_phi / p_th_mu) / (1.0 - q);
    let s_star_v = s_star(x);
    let strong_after_gap = Check::new(duration * pm.relaxation(mu) - s_star_v * p_th_mu);

    let eps = epsilon(pm).ok();
    let eps_v = eps.unwrap_or(f64::INFINITY);
    let x_end_for = |c: f64| if eps_v.is_finite() { 1.0 + (c - 1.0) / (1.0 + c * eps_v) } else { 1.0 };
    let lambda_for = |c: f64| s_star(x_end_for(c));
    let x_end = x_end_for(c);
    let lambda_star = lambda_for(c);
    let weak_at_end = Check::new(lambda_star - duration * pm.total_rate(1.0));
    let weak_at_end_relaxed = Check::new(lambda_star - duration * pm.relaxation(1.0));
    let c_sweep = [1.5, 2.0, 4.0]
        .into_iter()
        .map(|c| (c, duration * pm.total_rate(1.0) < lambda_for(c)))
        .collect();

    let relax_integral = integrate(|s| pm.relaxation(s), mu, 1.0, pm.tol)?.value;
    let p_th_end = pm.thermal_population(1.0);
    let subthermal = Check::new(
        p_th_end / (1.0 + c * eps_v) - (1.0 - (1.0 - pm.p_phi) * (-relax_integral).exp()),
    );

    let (derivative_start, derivative_end) = endpoint_derivatives(pm, duration)?;
    Ok(TheoremReport {
        duration,
        c,
        gap_rising,
        decreasing_rate,
        strong_after_gap,
        weak_at_end,
        subthermal,
        x,
        q,
        s_star: s_star_v,
        x_end,
        lambda_star,
        epsilon: eps,
        weak_at_end_relaxed,
        c_sweep,
        surrogate_after_gap: Check::new(duration * pm.relaxation(mu) - 2.0 * x.max(1.0).ln()),
        surrogate_at_end: Check::new(2.0 * x_end.ln() - duration * pm.relaxation(1.0)),
        derivative_start,
        derivative_end,
    })
}
