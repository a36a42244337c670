//! Ohmic bath: spectral density with detailed balance, Lamb shift, correlation function.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quad::{integrate_with_breaks, FixedRule, Tolerance};
use crate::units::{beta_from_mk, ghz_to_rad_per_ns};

/// How the exponential cutoff treats negative frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CutoffConvention {
    /// `exp(-|w| / wc)`: keeps detailed balance exact.
    #[default]
    Symmetric,
    /// `exp(-w / wc)` for all w, kept for comparison runs only.
    Printed,
}

/// Ohmic spectral density `eta_g2 w exp(-|w|/wc) / (1 - exp(-beta w))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathSpec {
    pub eta_g2: f64,
    /// Cutoff frequency in rad/ns.
    pub cutoff: f64,
    /// Inverse temperature in ns/rad.
    pub beta: f64,
    pub convention: CutoffConvention,
}

/// Integration window and tolerance for frequency-domain transforms.
#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    /// Window half-width in units of `max(cutoff, 1/beta)`.
    pub window_factor: f64,
    pub abs_tol: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            window_factor: 20.0,
            abs_tol: 1e-8,
        }
    }
}

impl BathSpec {
    pub fn new(eta_g2: f64, cutoff: f64, beta: f64) -> Result<Self> {
        if !(eta_g2 >= 0.0 && eta_g2.is_finite()) {
            return Err(Error::Argument(format!("coupling must be non-negative, got {eta_g2}")));
        }
        if !(cutoff > 0.0) {
            return Err(Error::Argument(format!("cutoff must be positive, got {cutoff}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Argument(format!("inverse temperature must be positive, got {beta}")));
        }
        Ok(Self {
            eta_g2,
            cutoff,
            beta,
            convention: CutoffConvention::Symmetric,
        })
    }

    /// Builds a bath from lab units: `2 pi eta g^2`, temperature in mK, cyclic cutoff in GHz.
    pub fn from_lab_units(eta_g2_times_2pi: f64, t_mk: f64, cutoff_ghz: f64) -> Result<Self> {
        if !(t_mk > 0.0) {
            return Err(Error::Argument(format!("temperature must be positive, got {t_mk} mK")));
        }
        Self::new(eta_g2_times_2pi / (2.0 * PI), ghz_to_rad_per_ns(cutoff_ghz), beta_from_mk(t_mk))
    }

    pub fn with_convention(mut self, convention: CutoffConvention) -> Self {
        self.convention = convention;
        self
    }

    fn cutoff_factor(&self, omega: f64) -> f64 {
        match self.convention {
            CutoffConvention::Symmetric => (-omega.abs() / self.cutoff).exp(),
            CutoffConvention::Printed => (-omega / self.cutoff).exp(),
        }
    }

    /// `w / (1 - exp(-beta w))`, continuous through zero.
    fn bose_factor(&self, omega: f64) -> f64 {
        let x = self.beta * omega;
        if x.abs() < 1e-8 {
            (1.0 + 0.5 * x) / self.beta
        } else {
            omega / -(-x).exp_m1()
        }
    }

    /// Spectral density in rad/ns.
    pub fn gamma(&self, omega: f64) -> f64 {
        self.eta_g2 * self.bose_factor(omega) * self.cutoff_factor(omega)
    }

    /// d gamma / d omega. At zero the right derivative is returned.
    pub fn gamma_derivative(&self, omega: f64) -> f64 {
        let x = self.beta * omega;
        // d/dw log(w / (1 - e^{-bw})) = 1/w - b / (e^{bw} - 1)
        let log_bose = if x.abs() < 1e-3 {
            self.beta * (0.5 - x / 12.0 + x * x * x / 720.0)
        } else {
            1.0 / omega - self.beta / x.exp_m1()
        };
        let log_cut = match self.convention {
            CutoffConvention::Symmetric if omega < 0.0 => 1.0 / self.cutoff,
            _ => -1.0 / self.cutoff,
        };
        self.gamma(omega) * (log_bose + log_cut)
    }

    /// Thermal ground-state probability of a two-level gap `omega`.
    pub fn thermal_ground_population(&self, omega: f64) -> f64 {
        1.0 / (1.0 + (-self.beta * omega).exp())
    }

    /// Half-width of the frequency window used for transforms.
    pub fn window(&self, opts: &SpectralOptions) -> f64 {
        opts.window_factor * self.cutoff.max(1.0 / self.beta)
    }

    fn scale(&self) -> f64 {
        self.cutoff.min(1.0 / self.beta)
    }

    /// Principal-value Lamb shift `(1/2pi) PV int gamma(w') / (w - w') dw'` over the window.
    pub fn lamb_shift(&self, omega: f64, opts: &SpectralOptions) -> Result<f64> {
        if self.eta_g2 == 0.0 {
            return Ok(0.0);
        }
        let w = self.window(opts);
        let tol = Tolerance {
            max_intervals: 20_000,
            ..Tolerance::new(opts.abs_tol * 2.0 * PI, 1e-11)
        };
        let outer = |x: f64| self.gamma(x) / (omega - x);
        if omega.abs() >= w {
            return Ok(integrate_with_breaks(outer, -w, w, &[0.0], tol)?.value / (2.0 * PI));
        }
        // Pair points symmetrically about the pole on [w - a, w + a]; gamma kinks at zero,
        // which sits at u = |w| in the paired integrand.
        let a = omega.abs().max(self.scale()).min(w - omega.abs());
        let paired = |u: f64| {
            if u == 0.0 {
                -2.0 * self.gamma_derivative(omega)
            } else {
                (self.gamma(omega - u) - self.gamma(omega + u)) / u
            }
        };
        let centre = integrate_with_breaks(paired, 0.0, a, &[omega.abs()], tol)?.value;
        let left = integrate_with_breaks(outer, -w, omega - a, &[0.0], tol)?.value;
        let right = integrate_with_breaks(outer, omega + a, w, &[0.0], tol)?.value;
        Ok((left + centre + right) / (2.0 * PI))
    }

    /// Builds the tabulated correlation function, long enough for |C| to decay by ~1e-10.
    pub fn correlation_kernel(&self, opts: &SpectralOptions) -> Result<CorrelationKernel> {
        CorrelationKernel::build(self, opts, None)
    }

    /// Correlation function at a single lag by direct quadrature.
    pub fn correlation(&self, t: f64, opts: &SpectralOptions) -> Complex64 {
        let nodes = FrequencyNodes::new(self, opts, t.abs().max(1e-3));
        nodes.eval(t).0
    }
}

/// Precomputed frequency quadrature for `C(t) = (1/2pi) int gamma(w) e^{-iwt} dw`.
struct FrequencyNodes {
    omega: Vec<f64>,
    amplitude: Vec<f64>,
}

impl FrequencyNodes {
    fn new(bath: &BathSpec, opts: &SpectralOptions, t_max: f64) -> Self {
        let w = bath.window(opts);
        // Each panel spans at most ~6 rad of phase at the longest lag.
        let width = (6.0 / t_max).min(0.5 * bath.scale());
        let panels = (w / width).ceil() as usize;
        let rule = FixedRule::new(16);
        let mut omega = Vec::with_capacity(2 * panels * rule.len());
        let mut amplitude = Vec::with_capacity(omega.capacity());
        let h = w / panels as f64;
        for side in [-1.0, 1.0] {
            for k in 0..panels {
                let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
                for (x, wt) in rule.mapped(a, b) {
                    let om = side * x;
                    omega.push(om);
                    amplitude.push(wt * bath.gamma(om) / (2.0 * PI));
                }
            }
        }
        Self { omega, amplitude }
    }

    /// Value and time derivative at lag `t`.
    fn eval(&self, t: f64) -> (Complex64, Complex64) {
        let mut c = Complex64::new(0.0, 0.0);
        let mut dc = Complex64::new(0.0, 0.0);
        for (&om, &amp) in self.omega.iter().zip(&self.amplitude) {
            let (sn, cs) = (om * t).sin_cos();
            let z = Complex64::new(amp * cs, -amp * sn);
            c += z;
            dc += z * Complex64::new(0.0, -om);
        }
        (c, dc)
    }
}

/// Correlation function tabulated on a uniform lag grid with cubic Hermite interpolation.
#[derive(Debug, Clone)]
pub struct CorrelationKernel {
    step: f64,
    values: Vec<Complex64>,
    slopes: Vec<Complex64>,
    abs_integral: f64,
}

impl CorrelationKernel {
    fn build(bath: &BathSpec, opts: &SpectralOptions, t_max: Option<f64>) -> Result<Self> {
        let t_max = t_max.unwrap_or(5.0 * bath.beta + 40.0 / bath.cutoff);
        let step = bath.cutoff.max(2.0 * PI / bath.beta).recip() / 40.0;
        let n = (t_max / step).ceil() as usize + 1;
        let nodes = FrequencyNodes::new(bath, opts, t_max);
        let (values, slopes): (Vec<_>, Vec<_>) = (0..n)
            .into_par_iter()
            .map(|i| nodes.eval(i as f64 * step))
            .unzip();
        let mut kernel = Self {
            step,
            values,
            slopes,
            abs_integral: 0.0,
        };
        if bath.eta_g2 > 0.0 {
            let end = kernel.t_max();
            let breaks: Vec<f64> = (1..n / 8).map(|k| (8 * k) as f64 * step).collect();
            kernel.abs_integral = integrate_with_breaks(
                |t| kernel.eval(t).norm(),
                0.0,
                end,
                &breaks,
                Tolerance {
                    max_intervals: 200_000,
                    ..Tolerance::new(1e-14, 1e-10)
                },
            )?
            .value
                + kernel.values[n - 1].norm() * end;
        }
        Ok(kernel)
    }

    pub fn t_max(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.step
    }

    /// C(t) for any real lag, conjugate-symmetric in t.
    pub fn eval(&self, t: f64) -> Complex64 {
        if t < 0.0 {
            return self.eval(-t).conj();
        }
        let u = t / self.step;
        let i = u.floor() as usize;
        if i + 1 >= self.values.len() {
            // The kink of gamma at zero frequency leaves a 1/t^2 tail.
            let end = self.t_max();
            let last = *self.values.last().expect("non-empty table");
            return if t <= end { last } else { last * (end / t).powi(2) };
        }
        let x = u - i as f64;
        let (x2, x3) = (x * x, x * x * x);
        let h00 = 2.0 * x3 - 3.0 * x2 + 1.0;
        let h10 = x3 - 2.0 * x2 + x;
        let h01 = -2.0 * x3 + 3.0 * x2;
        let h11 = x3 - x2;
        self.values[i] * h00
            + self.slopes[i] * (h10 * self.step)
            + self.values[i + 1] * h01
            + self.slopes[i + 1] * (h11 * self.step)
    }

    pub fn at_zero(&self) -> Complex64 {
        self.values[0]
    }

    /// `int_0^inf |C(t)| dt` in rad/ns * ns.
    pub fn abs_integral(&self) -> f64 {
        self.abs_integral
    }

    /// Decoherence timescale `1 / int_0^inf |C|`, absent for a decoupled bath.
    pub fn tau_sb(&self) -> Option<f64> {
        (self.abs_integral > 0.0).then(|| 1.0 / self.abs_integral)
    }

    /// Integral correlation time `int |C| / |C(0)|` in ns.
    pub fn correlation_time(&self) -> f64 {
        let c0 = self.values[0].norm();
        if c0 == 0.0 {
            0.0
        } else {
            self.abs_integral / c0
        }
    }

    /// Smallest tabulated lag after which |C| stays below `fraction * |C(0)|`.
    pub fn decay_time(&self, fraction: f64) -> f64 {
        let thr = fraction * self.values[0].norm();
        let last_above = self.values.iter().rposition(|c| c.norm() > thr);
        match last_above {
            Some(i) => ((i + 1) as f64 * self.step).min(self.t_max()),
            None => 0.0,
        }
    }
}
