//! Gaussian gap and angular-progression schedules, and the pause reparameterization.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use statrs::function::erf::erf;

use crate::error::{Error, Result};

/// Gap with a single Gaussian dip: `E0 (1 - (1 - delta) exp(-(s - center)^2 / (2 width^2)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapSchedule {
    /// Energy scale in rad/ns.
    pub scale: f64,
    /// Minimum gap as a fraction of `scale`, in (0, 1].
    pub min_fraction: f64,
    pub center: f64,
    pub width: f64,
}

impl GapSchedule {
    pub fn new(scale: f64, min_fraction: f64, center: f64, width: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::Argument(format!("gap scale must be positive, got {scale}")));
        }
        if !(min_fraction > 0.0 && min_fraction <= 1.0) {
            return Err(Error::Domain {
                name: "delta",
                value: min_fraction,
                domain: "(0, 1]".into(),
            });
        }
        if !(width > 0.0) {
            return Err(Error::Argument(format!("gap width must be positive, got {width}")));
        }
        Ok(Self {
            scale,
            min_fraction,
            center,
            width,
        })
    }

    fn dip(&self, s: f64) -> f64 {
        let u = (s - self.center) / self.width;
        (1.0 - self.min_fraction) * (-0.5 * u * u).exp()
    }

    /// Gap in rad/ns.
    pub fn gap(&self, s: f64) -> f64 {
        self.scale * (1.0 - self.dip(s))
    }

    pub fn gap_derivative(&self, s: f64) -> f64 {
        self.scale * self.dip(s) * (s - self.center) / (self.width * self.width)
    }
}

/// Terminal value of the annealing angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryAngle {
    HalfPi,
    Pi,
}

impl BoundaryAngle {
    pub fn radians(self) -> f64 {
        match self {
            Self::HalfPi => FRAC_PI_2,
            Self::Pi => PI,
        }
    }
}

/// Gaussian pulse of angular progression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularSchedule {
    pub center: f64,
    pub width: f64,
    pub boundary: BoundaryAngle,
}

impl AngularSchedule {
    pub fn new(center: f64, width: f64, boundary: BoundaryAngle) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Argument(format!("angular width must be positive, got {width}")));
        }
        Ok(Self {
            center,
            width,
            boundary,
        })
    }

    /// Peak rate, chosen so the full Gaussian integrates to the terminal angle.
    pub fn normalization(&self) -> f64 {
        match self.boundary {
            BoundaryAngle::HalfPi => (PI / 2.0).sqrt() / (2.0 * self.width),
            BoundaryAngle::Pi => PI.sqrt() / (SQRT_2 * self.width),
        }
    }

    pub fn angular_progression(&self, s: f64) -> f64 {
        let u = (s - self.center) / self.width;
        self.normalization() * (-0.5 * u * u).exp()
    }

    pub fn angular_progression_derivative(&self, s: f64) -> f64 {
        -self.angular_progression(s) * (s - self.center) / (self.width * self.width)
    }

    /// Angle accumulated from s = 0, so the angle vanishes exactly at the start.
    pub fn annealing_angle(&self, s: f64) -> f64 {
        let k = SQRT_2 * self.width;
        0.5 * self.boundary.radians() * (erf(self.center / k) + erf((s - self.center) / k))
    }
}

/// Pause of duration `duration` (in units of the unpaused anneal) inserted at `position`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauseSpec {
    pub position: f64,
    pub duration: f64,
}

impl PauseSpec {
    pub fn new(position: f64, duration: f64) -> Result<Self> {
        if !(position > 0.0 && position <= 1.0) {
            return Err(Error::Domain {
                name: "s_p",
                value: position,
                domain: "(0, 1]".into(),
            });
        }
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Error::Domain {
                name: "s_d",
                value: duration,
                domain: "[0, inf)".into(),
            });
        }
        Ok(Self { position, duration })
    }

    /// No pause at all.
    pub fn none() -> Self {
        Self {
            position: 1.0,
            duration: 0.0,
        }
    }

    pub fn tau_final(&self) -> f64 {
        1.0 + self.duration
    }

    pub fn pause_end(&self) -> f64 {
        self.position + self.duration
    }

    /// Anneal parameter and pause flag at dimensionless time `tau`.
    pub fn pause_map(&self, tau: f64) -> Result<(f64, bool)> {
        if !(0.0..=self.tau_final()).contains(&tau) {
            return Err(Error::Domain {
                name: "tau",
                value: tau,
                domain: format!("[0, {}]", self.tau_final()),
            });
        }
        Ok(self.map_unchecked(tau))
    }

    pub(crate) fn map_unchecked(&self, tau: f64) -> (f64, bool) {
        if tau <= self.position {
            (tau, false)
        } else if tau <= self.pause_end() {
            (self.position, self.duration > 0.0)
        } else {
            (tau - self.duration, false)
        }
    }

    /// Earliest dimensionless time at which the anneal reaches `s`.
    pub fn first_time_at(&self, s: f64) -> f64 {
        if s <= self.position {
            s
        } else {
            s + self.duration
        }
    }

    /// Interior kinks of the map.
    pub fn kinks(&self) -> Vec<f64> {
        if self.duration > 0.0 {
            vec![self.position, self.pause_end()]
        } else {
            Vec::new()
        }
    }
}

/// Angular progression seen in dimensionless time: zero while paused.
pub fn dtheta_dtau(a: &AngularSchedule, p: &PauseSpec, tau: f64) -> Result<f64> {
    let (s, paused) = p.pause_map(tau)?;
    Ok(if paused { 0.0 } else { a.angular_progression(s) })
}

/// Sensitivity of `F(s(tau))` to the pause position: `F'(s_p)` inside the pause, zero outside.
pub fn pause_partial_derivative<F: Fn(f64) -> f64>(f: F, p: &PauseSpec, tau: f64) -> Result<f64> {
    p.pause_map(tau)?;
    if p.duration > 0.0 && (tau == p.position || tau == p.pause_end()) {
        return Err(Error::Domain {
            name: "tau",
            value: tau,
            domain: "dimensionless time away from the pause kinks".into(),
        });
    }
    if p.duration > 0.0 && tau > p.position && tau < p.pause_end() {
        Ok(five_point_derivative(&f, p.position, 1e-4))
    } else {
        Ok(0.0)
    }
}

pub(crate) fn five_point_derivative<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, Tolerance};
    use crate::units::{ghz_to_rad_per_ns, rad_per_ns_to_ghz};
    use proptest::prelude::*;

    fn reference_gap() -> GapSchedule {
        GapSchedule::new(ghz_to_rad_per_ns(15.0 / PI), 1e-3, 0.5, 0.5).unwrap()
    }

    #[test]
    fn gap_endpoints_in_ghz() {
        let g = reference_gap();
        assert!((rad_per_ns_to_ghz(g.gap(0.0)) - 1.881).abs() < 1e-3);
        assert!((rad_per_ns_to_ghz(g.gap(0.5)) * 1e3 - 4.775).abs() < 1e-3);
    }

    #[test]
    fn full_fraction_gives_flat_gap() {
        let g = GapSchedule::new(3.0, 1.0, 0.4, 0.2).unwrap();
        for s in [0.0, 0.3, 0.4, 1.0] {
            assert_eq!(g.gap(s), 3.0);
        }
    }

    #[test]
    fn gap_matches_direct_formula_on_grid() {
        let g = reference_gap();
        for i in 0..1000 {
            let s = i as f64 / 999.0;
            let direct = 30.0 * (1.0 - 0.999 * (-(s - 0.5f64).powi(2) / 0.5).exp());
            assert!((g.gap(s) - direct).abs() < 1e-12);
        }
        let ratio = g.gap(1.0) / g.gap(0.5);
        assert!((ratio - 30.0 * (1.0 - 0.999 * (-0.5f64).exp()) / 0.03).abs() < 1e-9);
    }

    #[test]
    fn gap_derivative_matches_finite_difference() {
        let g = reference_gap();
        for s in [0.1, 0.45, 0.77, 1.0] {
            let fd = five_point_derivative(&|x| g.gap(x), s, 1e-4);
            assert!((g.gap_derivative(s) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn progression_peak_and_boundary_doubling() {
        let half = AngularSchedule::new(0.5, 0.01, BoundaryAngle::HalfPi).unwrap();
        let full = AngularSchedule::new(0.5, 0.01, BoundaryAngle::Pi).unwrap();
        assert_eq!(half.angular_progression(0.5), half.normalization());
        for s in [0.0, 0.48, 0.5, 0.51, 0.9] {
            let r = full.angular_progression(s) - 2.0 * half.angular_progression(s);
            assert!(r.abs() <= 1e-12 * full.angular_progression(s).max(1e-300));
            assert!((full.annealing_angle(s) - 2.0 * half.annealing_angle(s)).abs() < 1e-14);
        }
    }

    #[test]
    fn progression_integrates_to_boundary_angle() {
        for b in [BoundaryAngle::HalfPi, BoundaryAngle::Pi] {
            let a = AngularSchedule::new(0.5, 0.01, b).unwrap();
            let r = integrate(|s| a.angular_progression(s), 0.0, 1.0, Tolerance::new(1e-13, 1e-13))
                .unwrap();
            assert!((r.value - b.radians()).abs() < 1e-8);
        }
    }

    #[test]
    fn angle_consistent_with_cumulative_progression() {
        let a = AngularSchedule::new(0.5, 0.01, BoundaryAngle::HalfPi).unwrap();
        assert!(a.annealing_angle(0.0).abs() < 1e-15);
        assert!((a.annealing_angle(0.5) - PI / 4.0).abs() < 1e-14);
        for s in [0.3, 0.49, 0.6, 1.0] {
            let r = integrate(|x| a.angular_progression(x), 0.0, s, Tolerance::new(1e-13, 1e-13))
                .unwrap();
            assert!((a.annealing_angle(s) - r.value).abs() < 1e-8, "s = {s}");
        }
    }

    #[test]
    fn pause_map_examples() {
        let p = PauseSpec::new(0.5, 0.5).unwrap();
        assert_eq!(p.pause_map(0.8).unwrap(), (0.5, true));
        let (s, paused) = p.pause_map(1.2).unwrap();
        assert!((s - 0.7).abs() < 1e-15 && !paused);
        assert!(p.pause_map(1.6).is_err());
        assert!(p.pause_map(-0.1).is_err());
        let id = PauseSpec::new(0.3, 0.0).unwrap();
        for tau in [0.0, 0.3, 0.31, 1.0] {
            assert_eq!(id.pause_map(tau).unwrap(), (tau, false));
        }
    }

    #[test]
    fn dtheta_dtau_branches() {
        let a = AngularSchedule::new(0.5, 0.05, BoundaryAngle::HalfPi).unwrap();
        let p = PauseSpec::new(0.45, 0.3).unwrap();
        assert_eq!(dtheta_dtau(&a, &p, 0.6).unwrap(), 0.0);
        assert_eq!(dtheta_dtau(&a, &p, 0.4).unwrap(), a.angular_progression(0.4));
        let theta = |tau: f64| a.annealing_angle(p.pause_map(tau).unwrap().0);
        for tau in [0.2, 0.44, 0.5, 0.74, 0.76, 1.1] {
            let h = 1e-6;
            let fd = (theta(tau + h) - theta(tau - h)) / (2.0 * h);
            assert!((fd - dtheta_dtau(&a, &p, tau).unwrap()).abs() < 1e-6, "tau = {tau}");
        }
    }

    #[test]
    fn pause_partial_derivative_cases() {
        let g = reference_gap();
        let p = PauseSpec::new(0.6, 0.4).unwrap();
        assert_eq!(pause_partial_derivative(|s| g.gap(s), &p, 0.3).unwrap(), 0.0);
        assert_eq!(pause_partial_derivative(|_| 2.0, &p, 0.8).unwrap(), 0.0);
        assert!(pause_partial_derivative(|s| g.gap(s), &p, 0.6).is_err());
        assert!(pause_partial_derivative(|s| g.gap(s), &p, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn pause_partial_matches_finite_difference(sp in 0.1f64..0.9, sd in 0.05f64..2.0, frac in 0.0f64..1.0) {
            let g = reference_gap();
            let p = PauseSpec::new(sp, sd).unwrap();
            let tau = frac * p.tau_final();
            let h = 1e-5;
            prop_assume!((tau - sp).abs() > 10.0 * h && (tau - p.pause_end()).abs() > 10.0 * h);
            let shifted = |d: f64| {
                let q = PauseSpec::new(sp + d, sd).unwrap();
                g.gap(q.pause_map(tau).unwrap().0)
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            let exact = pause_partial_derivative(|s| g.gap(s), &p, tau).unwrap();
            prop_assert!((fd - exact).abs() < 1e-6 * (1.0 + exact.abs()));
        }

        #[test]
        fn pause_map_is_monotone_and_lipschitz(sp in 0.01f64..1.0, sd in 0.0f64..5.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let p = PauseSpec::new(sp, sd).unwrap();
            let (t1, t2) = (a.min(b) * p.tau_final(), a.max(b) * p.tau_final());
            let (s1, _) = p.pause_map(t1).unwrap();
            let (s2, _) = p.pause_map(t2).unwrap();
            prop_assert!(s2 >= s1);
            prop_assert!(s2 - s1 <= t2 - t1 + 1e-12);
            prop_assert_eq!(p.pause_map(0.0).unwrap().0, 0.0);
            prop_assert!((p.pause_map(p.tau_final()).unwrap().0 - 1.0).abs() < 1e-12);
        }

        #[test]
        fn gap_is_bounded(scale in 0.1f64..100.0, frac in 1e-4f64..1.0, mu in 0.01f64..0.99, w in 0.01f64..1.0, s in 0.0f64..1.0) {
            let g = GapSchedule::new(scale, frac, mu, w).unwrap();
            let v = g.gap(s);
            prop_assert!(v >= scale * frac * (1.0 - 1e-12) && v <= scale);
        }

        #[test]
        fn angle_is_non_decreasing(mu in 0.2f64..0.8, w in 0.005f64..0.1, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let sched = AngularSchedule::new(mu, w, BoundaryAngle::HalfPi).unwrap();
            prop_assert!(sched.annealing_angle(a.max(b)) >= sched.annealing_angle(a.min(b)));
            prop_assert!(sched.angular_progression(a) >= 0.0);
        }
    }
}
