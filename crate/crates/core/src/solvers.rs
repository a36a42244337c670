//! Adiabatic-frame time evolution: closed dynamics, the adiabatic master equation, the
//! RWA-Redfield Lindblad form built on the virtual gap, and the full Redfield equation.

use std::f64::consts::PI;

use log::warn;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::analytic::DiabaticPulse;
use crate::bath::{BathSpec, CorrelationKernel, SpectralOptions};
use crate::error::{Error, Result};
use crate::frames::AnnealModel;
use crate::interp::CubicSpline;
use crate::ode::{integrate, DenseOutput, OdeOptions, OdeStats};
use crate::quad::FixedRule;
use crate::schedules::PauseSpec;
use crate::spin::{
    hermitian_eigen, identity, pack, pack_full, sigma_y, sigma_z, unpack, unpack_full, Op,
};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Which equation of motion drives the density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Closed,
    Ame,
    RedfieldRwa,
    Redfield,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [Self::Closed, Self::Ame, Self::RedfieldRwa, Self::Redfield];

    pub fn name(self) -> &'static str {
        match self {
            Self::Closed => "closed",
            Self::Ame => "ame",
            Self::RedfieldRwa => "redfield_rwa",
            Self::Redfield => "redfield",
        }
    }

    pub fn is_open(self) -> bool {
        self != Self::Closed
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown solver kind '{s}'")))
    }
}

/// How the adiabatic master equation treats the angular-progression pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AmeMode {
    /// Geometric term kept in the unitary part; dissipation built on the bare gap.
    #[default]
    Full,
    /// Pulse replaced by an instantaneous rotation, dissipation frozen across the
    /// Landau-Zener window, no Lamb shift.
    DeltaPulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialState {
    #[default]
    Ground,
    /// Gibbs state of the initial gap.
    Thermal,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub ode: OdeOptions,
    /// Redfield memory window in bath correlation times.
    pub memory_correlation_times: f64,
    /// Gauss-Legendre nodes for the Redfield memory integral.
    pub memory_nodes: usize,
    pub ame_mode: AmeMode,
    pub initial: InitialState,
    pub lamb_shift: bool,
    /// Half-width of the Landau-Zener window in pulse widths.
    pub pulse_half_width: f64,
    /// Evenly spaced output samples per trajectory (the final state is always kept).
    pub samples: usize,
    pub spectral: SpectralOptions,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            ode: OdeOptions {
                rel_tol: 1e-8,
                abs_tol: 1e-10,
                max_step: 1e-3,
                ..OdeOptions::default()
            },
            memory_correlation_times: 10.0,
            memory_nodes: 64,
            ame_mode: AmeMode::Full,
            initial: InitialState::Ground,
            lamb_shift: true,
            pulse_half_width: 4.0,
            samples: 201,
            spectral: SpectralOptions::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let o = &self.ode;
        if !(o.rel_tol > 0.0 && o.abs_tol > 0.0 && o.max_step > 0.0) {
            return Err(Error::Argument("tolerances and max step must be positive".into()));
        }
        if !(self.memory_correlation_times > 0.0) || self.memory_nodes == 0 {
            return Err(Error::Argument("memory window and node count must be positive".into()));
        }
        if !(self.pulse_half_width > 0.0) {
            return Err(Error::Argument("pulse half-width must be positive".into()));
        }
        Ok(())
    }
}

/// Density matrix in the adiabatic frame at dimensionless time `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdiabaticState {
    pub tau: f64,
    pub s: f64,
    pub rho: Op,
}

impl AdiabaticState {
    pub fn ground_population(&self) -> f64 {
        self.rho[(0, 0)].re
    }

    pub fn trace(&self) -> f64 {
        (self.rho[(0, 0)] + self.rho[(1, 1)]).re
    }

    /// Smallest eigenvalue of the density matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigen(&self.rho).0
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub kind: SolverKind,
    pub ame_mode: Option<AmeMode>,
    pub t_f: f64,
    pub pause: PauseSpec,
    pub states: Vec<AdiabaticState>,
    pub stats: OdeStats,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn final_state(&self) -> &AdiabaticState {
        self.states.last().expect("trajectory holds at least one state")
    }

    /// Recorded state closest to `tau`; segment ends and pause kinks are always recorded.
    pub fn state_near(&self, tau: f64) -> &AdiabaticState {
        self.states
            .iter()
            .min_by(|a, b| (a.tau - tau).abs().total_cmp(&(b.tau - tau).abs()))
            .expect("trajectory holds at least one state")
    }
}

/// Final ground-state population in the adiabatic frame.
pub fn success_probability(traj: &Trajectory) -> f64 {
    traj.final_state().ground_population()
}

/// Lamb shift sampled on logarithmic frequency grids on both sides of zero.
#[derive(Debug, Clone)]
struct LambTable {
    lo: f64,
    hi: f64,
    positive: CubicSpline,
    negative: CubicSpline,
    at_zero: f64,
    bath: BathSpec,
    opts: SpectralOptions,
}

impl LambTable {
    const POINTS: usize = 161;

    fn new(bath: &BathSpec, lo: f64, hi: f64, opts: &SpectralOptions) -> Result<Self> {
        let (llo, lhi) = (lo.ln(), hi.ln());
        let x: Vec<f64> = (0..Self::POINTS)
            .map(|i| llo + (lhi - llo) * i as f64 / (Self::POINTS - 1) as f64)
            .collect();
        let eval = |sign: f64| -> Result<Vec<f64>> {
            x.par_iter().map(|l| bath.lamb_shift(sign * l.exp(), opts)).collect()
        };
        let (pos, neg) = (eval(1.0)?, eval(-1.0)?);
        Ok(Self {
            lo,
            hi,
            positive: CubicSpline::new(x.clone(), pos)?,
            negative: CubicSpline::new(x, neg)?,
            at_zero: bath.lamb_shift(0.0, opts)?,
            bath: *bath,
            opts: *opts,
        })
    }

    fn eval(&self, omega: f64) -> f64 {
        if omega == 0.0 {
            return self.at_zero;
        }
        let a = omega.abs();
        if a < self.lo || a > self.hi {
            return self.bath.lamb_shift(omega, &self.opts).unwrap_or(0.0);
        }
        if omega > 0.0 {
            self.positive.eval(a.ln())
        } else {
            self.negative.eval(a.ln())
        }
    }
}

/// Bath together with the precomputed data a solver kind needs.
#[derive(Debug, Clone)]
pub struct Environment {
    pub bath: BathSpec,
    lamb: Option<LambTable>,
    kernel: Option<CorrelationKernel>,
}

impl Environment {
    /// Bare bath; Lamb-shift tables and kernels are added by [`Self::prepare`].
    pub fn new(bath: BathSpec) -> Self {
        Self {
            bath,
            lamb: None,
            kernel: None,
        }
    }

    /// Precomputes what `kind` needs for `model` at anneal time `t_f`.
    pub fn prepare(
        bath: BathSpec,
        model: &AnnealModel,
        t_f: f64,
        kinds: &[SolverKind],
        cfg: &SolverConfig,
    ) -> Result<Self> {
        let mut env = Self::new(bath);
        let lamb_needed = cfg.lamb_shift
            && bath.eta_g2 > 0.0
            && kinds.iter().any(|k| match k {
                SolverKind::Ame => cfg.ame_mode == AmeMode::Full,
                SolverKind::RedfieldRwa => true,
                _ => false,
            });
        if lamb_needed {
            let (lo, hi) = frequency_range(model, t_f);
            env.lamb = Some(LambTable::new(&bath, 0.5 * lo, 2.0 * hi, &cfg.spectral)?);
        }
        if kinds.contains(&SolverKind::Redfield) && bath.eta_g2 > 0.0 {
            env.kernel = Some(bath.correlation_kernel(&cfg.spectral)?);
        }
        Ok(env)
    }

    pub fn kernel(&self) -> Option<&CorrelationKernel> {
        self.kernel.as_ref()
    }

    fn lamb_shift(&self, omega: f64) -> f64 {
        self.lamb.as_ref().map_or(0.0, |t| t.eval(omega))
    }
}

/// Smallest and largest transition frequency the RWA generator can see.
fn frequency_range(model: &AnnealModel, t_f: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..=4000 {
        let s = i as f64 / 4000.0;
        let om = model.omega(s).abs();
        lo = lo.min(om);
        hi = hi.max(model.virtual_gap(s, t_f));
    }
    if let Some(p) = model.pulse {
        hi = hi.max(model.virtual_gap(p.center, t_f));
    }
    (lo.max(1e-9), hi.max(lo * 1.01))
}

/// Scalars that describe the generator at one dimensionless time.
struct Instant {
    s: f64,
    /// d theta / d tau, zero while paused.
    rate: f64,
    omega: f64,
}

struct Problem<'a> {
    model: &'a AnnealModel,
    pause: PauseSpec,
    t_f: f64,
}

impl Problem<'_> {
    fn instant(&self, tau: f64) -> Instant {
        let (s, paused) = self.pause.map_unchecked(tau.clamp(0.0, self.pause.tau_final()));
        Instant {
            s,
            rate: if paused { 0.0 } else { self.model.dtheta(s) },
            omega: self.model.omega(s),
        }
    }

    /// `-(t_f Omega / 2) Z + (theta_dot / 2) Y`.
    fn hamiltonian(&self, at: &Instant, geometric: bool) -> Op {
        let z = sigma_z() * Complex64::from(-0.5 * self.t_f * at.omega);
        if geometric {
            z + sigma_y() * Complex64::from(0.5 * at.rate)
        } else {
            z
        }
    }

    fn breakpoints(&self, cfg: &SolverConfig) -> Vec<f64> {
        let mut b = self.pause.kinks();
        if let Some(p) = self.model.pulse {
            let (lo, hi) = p.edges(cfg.pulse_half_width);
            for s in [lo, hi] {
                if s > 0.0 && s < 1.0 {
                    b.push(self.pause.first_time_at(s));
                }
            }
        }
        let end = self.pause.tau_final();
        b.retain(|&t| t > 0.0 && t < end);
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    fn initial_state(&self, env: Option<&Environment>, initial: InitialState) -> Op {
        let p = match (initial, env) {
            (InitialState::Thermal, Some(e)) => e.bath.thermal_ground_population(self.model.omega(0.0)),
            _ => 1.0,
        };
        Op::new(Complex64::from(p), Complex64::from(0.0), Complex64::from(0.0), Complex64::from(1.0 - p))
    }
}

fn lindblad(h: &Op, jumps: &[Op], rho: &Op) -> Op {
    let mut out = (h * rho - rho * h) * (-I);
    for l in jumps {
        let ld = l.adjoint();
        let ldl = ld * l;
        out += l * rho * ld - (ldl * rho + rho * ldl) * Complex64::from(0.5);
    }
    out
}

/// Lindblad generator with jumps between the projectors `ground`/`excited` of a gap `gap`.
fn thermal_generator(
    problem: &Problem,
    env: &Environment,
    at: &Instant,
    h: Op,
    ground: Op,
    excited: Op,
    gap: f64,
    lamb: bool,
) -> (Op, Vec<Op>) {
    let bath = &env.bath;
    let t_f = problem.t_f;
    let down_rate = (t_f * bath.gamma(gap)).sqrt();
    let up_rate = (t_f * bath.gamma(-gap)).sqrt();
    let dephase_rate = (t_f * bath.gamma(0.0)).sqrt();
    let (ls_down, ls_up, ls_zero) = if lamb {
        (env.lamb_shift(gap), env.lamb_shift(-gap), env.lamb_shift(0.0))
    } else {
        (0.0, 0.0, 0.0)
    };
    let mut jumps = Vec::with_capacity(3 * problem.model.couplings.len());
    let mut h_ls = Op::zeros();
    for s_op in problem.model.coupling_operators(at.s) {
        let down = ground * s_op * excited;
        let up = excited * s_op * ground;
        let diag = ground * s_op * ground + excited * s_op * excited;
        if lamb {
            h_ls += (down.adjoint() * down) * Complex64::from(ls_down)
                + (up.adjoint() * up) * Complex64::from(ls_up)
                + (diag.adjoint() * diag) * Complex64::from(ls_zero);
        }
        jumps.push(down * Complex64::from(down_rate));
        jumps.push(up * Complex64::from(up_rate));
        jumps.push(diag * Complex64::from(dephase_rate));
    }
    (h + h_ls * Complex64::from(t_f), jumps)
}

/// Accumulates samples and ODE statistics across segments.
struct Recorder {
    sample_times: Vec<f64>,
    next: usize,
    states: Vec<AdiabaticState>,
    stats: OdeStats,
}

impl Recorder {
    fn new(tau_final: f64, samples: usize) -> Self {
        let n = samples.max(2);
        Self {
            sample_times: (0..n).map(|i| tau_final * i as f64 / (n - 1) as f64).collect(),
            next: 0,
            states: Vec::with_capacity(n),
            stats: OdeStats::default(),
        }
    }

    fn push(&mut self, problem: &Problem, tau: f64, rho: Op) {
        let (s, _) = problem.pause.map_unchecked(tau);
        self.states.push(AdiabaticState { tau, s, rho });
    }

    /// Records samples inside (start, end] from a dense solution, or a constant state.
    fn record<F: Fn(f64) -> Op>(&mut self, problem: &Problem, start: f64, end: f64, state_at: F) {
        while self.next < self.sample_times.len() && self.sample_times[self.next] <= end {
            let t = self.sample_times[self.next];
            if t >= start {
                let rho = state_at(t);
                self.push(problem, t, rho);
            }
            self.next += 1;
        }
    }
}

fn run_segments<F>(
    problem: &Problem,
    rho0: Op,
    cfg: &SolverConfig,
    segments: &[(f64, f64)],
    mut jump_after: impl FnMut(usize, Op) -> Op,
    rhs: F,
) -> Result<(Vec<AdiabaticState>, OdeStats)>
where
    F: Fn(f64, &Op) -> Op,
{
    let mut rec = Recorder::new(problem.pause.tau_final(), cfg.samples);
    let mut rho = rho0;
    rec.record(problem, 0.0, 0.0, |_| rho0);
    let mut last_end = 0.0;
    for (k, &(a, b)) in segments.iter().enumerate() {
        if a > last_end {
            // Frozen stretch between segments: the state does not move.
            let frozen = rho;
            rec.record(problem, last_end, a, |_| frozen);
        }
        let sol = integrate(
            |t, y: &[f64; 4]| pack(&rhs(t, &unpack(y))),
            a,
            b,
            pack(&rho),
            &cfg.ode,
            true,
        )?;
        rec.stats += sol.stats;
        let dense = sol.dense;
        rec.record(problem, a, b, |t| {
            if dense.is_empty() {
                unpack(&sol.y)
            } else {
                unpack(&dense.eval(t))
            }
        });
        let end_state = unpack(&sol.y);
        if rec.states.last().map_or(true, |st| st.tau < b) {
            rec.push(problem, b, end_state);
        }
        rho = jump_after(k, end_state);
        last_end = b;
    }
    let tau_f = problem.pause.tau_final();
    let frozen = rho;
    rec.record(problem, last_end, tau_f, |_| frozen);
    if rec.states.last().map_or(true, |st| st.tau < tau_f) {
        rec.push(problem, tau_f, rho);
    } else if let Some(last) = rec.states.last_mut() {
        last.rho = rho;
    }
    Ok((rec.states, rec.stats))
}

fn contiguous_segments(breaks: &[f64], end: f64) -> Vec<(f64, f64)> {
    let mut points = vec![0.0];
    points.extend_from_slice(breaks);
    points.push(end);
    points.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1])).collect()
}

fn check_inputs(model: &AnnealModel, t_f: f64, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    if !(t_f > 0.0 && t_f.is_finite()) {
        return Err(Error::Domain {
            name: "t_f",
            value: t_f,
            domain: "(0, inf) ns".into(),
        });
    }
    if model.couplings.is_empty() {
        return Err(Error::Argument("model has no coupling operators".into()));
    }
    Ok(())
}

fn finish(
    kind: SolverKind,
    ame_mode: Option<AmeMode>,
    problem: &Problem,
    (states, stats): (Vec<AdiabaticState>, OdeStats),
    warnings: Vec<String>,
) -> Trajectory {
    Trajectory {
        kind,
        ame_mode,
        t_f: problem.t_f,
        pause: problem.pause,
        states,
        stats,
        warnings,
    }
}

/// Von Neumann evolution in the adiabatic frame from the ground state.
pub fn evolve_closed(
    model: &AnnealModel,
    pause: PauseSpec,
    t_f: f64,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    check_inputs(model, t_f, cfg)?;
    let problem = Problem { model, pause, t_f };
    let segments = contiguous_segments(&problem.breakpoints(cfg), pause.tau_final());
    let rho0 = problem.initial_state(None, InitialState::Ground);
    let out = run_segments(&problem, rho0, cfg, &segments, |_, r| r, |tau, rho| {
        let h = problem.hamiltonian(&problem.instant(tau), true);
        (h * rho - rho * h) * (-I)
    })?;
    Ok(finish(SolverKind::Closed, None, &problem, out, Vec::new()))
}

/// Adiabatic master equation; see [`AmeMode`] for the two treatments of the pulse.
pub fn evolve_ame(
    model: &AnnealModel,
    pause: PauseSpec,
    env: &Environment,
    t_f: f64,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    check_inputs(model, t_f, cfg)?;
    let problem = Problem { model, pause, t_f };
    let rho0 = problem.initial_state(Some(env), cfg.initial);
    let ground = Op::new(Complex64::from(1.0), Complex64::from(0.0), Complex64::from(0.0), Complex64::from(0.0));
    let excited = identity() - ground;
    let mode = cfg.ame_mode;
    let lamb = mode == AmeMode::Full && cfg.lamb_shift;
    let rhs = |tau: f64, rho: &Op| {
        let at = problem.instant(tau);
        let h = problem.hamiltonian(&at, mode == AmeMode::Full);
        let (h, jumps) = thermal_generator(&problem, env, &at, h, ground, excited, at.omega, lamb);
        lindblad(&h, &jumps, rho)
    };
    let out = match mode {
        AmeMode::Full => {
            let segments = contiguous_segments(&problem.breakpoints(cfg), pause.tau_final());
            run_segments(&problem, rho0, cfg, &segments, |_, r| r, rhs)?
        }
        AmeMode::DeltaPulse => {
            let (lo, hi, pulse) = delta_window(&problem, cfg)?;
            let mut before: Vec<f64> = pause.kinks().into_iter().filter(|&t| t < lo).collect();
            before.push(lo);
            let mut segments = contiguous_segments(&before[..before.len() - 1], lo);
            let mut after = vec![hi];
            after.extend(pause.kinks().into_iter().filter(|&t| t > hi));
            after.push(pause.tau_final());
            let pulse_index = segments.len();
            segments.extend(after.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1])));
            let u = pulse.unitary();
            let apply = |k: usize, r: Op| if k + 1 == pulse_index { u * r * u.adjoint() } else { r };
            if pulse_index == 0 {
                // Window starts at tau = 0: rotate the initial state directly.
                let rho0 = u * rho0 * u.adjoint();
                run_segments(&problem, rho0, cfg, &segments, |_, r| r, rhs)?
            } else {
                run_segments(&problem, rho0, cfg, &segments, apply, rhs)?
            }
        }
    };
    Ok(finish(SolverKind::Ame, Some(mode), &problem, out, Vec::new()))
}

/// Dimensionless-time window frozen by the delta pulse, and the pulse itself.
fn delta_window(problem: &Problem, cfg: &SolverConfig) -> Result<(f64, f64, DiabaticPulse)> {
    let window = problem
        .model
        .pulse
        .ok_or_else(|| Error::Argument("delta-pulse mode needs a localized angular pulse".into()))?;
    let (s_lo, s_hi) = window.edges(cfg.pulse_half_width);
    let p = problem.pause;
    if p.duration > 0.0 && p.position > s_lo && p.position < s_hi {
        return Err(Error::Argument(format!(
            "pause at s_p = {} falls inside the Landau-Zener window [{s_lo}, {s_hi}]",
            p.position
        )));
    }
    let pulse = DiabaticPulse::for_model(problem.model, problem.t_f)?;
    Ok((p.first_time_at(s_lo.max(0.0)), p.first_time_at(s_hi.min(1.0)), pulse))
}

/// Ground-state population just before the Landau-Zener window, from the delta-pulse AME.
pub fn pre_pulse_population(
    model: &AnnealModel,
    env: &Environment,
    t_f: f64,
    cfg: &SolverConfig,
) -> Result<f64> {
    check_inputs(model, t_f, cfg)?;
    let problem = Problem {
        model,
        pause: PauseSpec::none(),
        t_f,
    };
    let (lo, _, _) = delta_window(&problem, cfg)?;
    let rho0 = problem.initial_state(Some(env), cfg.initial);
    if lo <= 0.0 {
        return Ok(rho0[(0, 0)].re);
    }
    let ground = Op::new(Complex64::from(1.0), Complex64::from(0.0), Complex64::from(0.0), Complex64::from(0.0));
    let excited = identity() - ground;
    let sol = integrate(
        |tau, y: &[f64; 4]| {
            let at = problem.instant(tau);
            let h = problem.hamiltonian(&at, false);
            let (h, jumps) = thermal_generator(&problem, env, &at, h, ground, excited, at.omega, false);
            pack(&lindblad(&h, &jumps, &unpack(y)))
        },
        0.0,
        lo,
        pack(&rho0),
        &cfg.ode,
        false,
    )?;
    Ok(sol.y[0])
}

/// Lindblad form obtained from Redfield by the rotating-wave approximation in the
/// instantaneous eigenbasis of the adiabatic-frame Hamiltonian.
pub fn evolve_redfield_rwa(
    model: &AnnealModel,
    pause: PauseSpec,
    env: &Environment,
    t_f: f64,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    check_inputs(model, t_f, cfg)?;
    let problem = Problem { model, pause, t_f };
    let rho0 = problem.initial_state(Some(env), cfg.initial);
    let segments = contiguous_segments(&problem.breakpoints(cfg), pause.tau_final());
    let out = run_segments(&problem, rho0, cfg, &segments, |_, r| r, |tau, rho| {
        let at = problem.instant(tau);
        let h = problem.hamiltonian(&at, true);
        let (lo, hi, v) = hermitian_eigen(&h);
        let g = v.column(0).into_owned();
        let e = v.column(1).into_owned();
        let ground = g * g.adjoint();
        let excited = e * e.adjoint();
        let gap = (hi - lo) / t_f;
        let (h, jumps) = thermal_generator(&problem, env, &at, h, ground, excited, gap, cfg.lamb_shift);
        lindblad(&h, &jumps, rho)
    })?;
    Ok(finish(SolverKind::RedfieldRwa, None, &problem, out, Vec::new()))
}

/// Closed-system propagator U(tau) with dense output over the whole anneal.
struct Propagator {
    dense: DenseOutput<8>,
}

impl Propagator {
    fn new(problem: &Problem, cfg: &SolverConfig) -> Result<(Self, OdeStats)> {
        let mut dense = DenseOutput::default();
        let mut stats = OdeStats::default();
        let mut u = identity();
        let opts = OdeOptions {
            rel_tol: cfg.ode.rel_tol.min(1e-10),
            abs_tol: cfg.ode.abs_tol.min(1e-12),
            ..cfg.ode
        };
        for (a, b) in contiguous_segments(&problem.breakpoints(cfg), problem.pause.tau_final()) {
            let sol = integrate(
                |tau, y: &[f64; 8]| {
                    let h = problem.hamiltonian(&problem.instant(tau), true);
                    pack_full(&(h * unpack_full(y) * (-I)))
                },
                a,
                b,
                pack_full(&u),
                &opts,
                true,
            )?;
            stats += sol.stats;
            dense.append(sol.dense);
            u = unpack_full(&sol.y);
        }
        Ok((Self { dense }, stats))
    }

    fn at(&self, tau: f64) -> Op {
        unpack_full(&self.dense.eval(tau))
    }
}

/// Full Redfield equation with a truncated memory kernel.
pub fn evolve_redfield(
    model: &AnnealModel,
    pause: PauseSpec,
    env: &Environment,
    t_f: f64,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    check_inputs(model, t_f, cfg)?;
    let problem = Problem { model, pause, t_f };
    let kernel = match env.kernel() {
        Some(k) => k.clone(),
        None if env.bath.eta_g2 == 0.0 => {
            let mut traj = evolve_closed(model, pause, t_f, cfg)?;
            traj.kind = SolverKind::Redfield;
            return Ok(traj);
        }
        None => env.bath.correlation_kernel(&cfg.spectral)?,
    };
    let mut warnings = Vec::new();
    let window_ns = cfg.memory_correlation_times * kernel.correlation_time();
    let c0 = kernel.at_zero().norm();
    let residual = kernel.eval(window_ns).norm() / c0;
    if residual > 1e-3 {
        let msg = format!(
            "memory window {window_ns:.4} ns leaves |C(window)|/|C(0)| = {residual:.2e}; \
             bath decay time to 1e-3 is {:.4} ns",
            kernel.decay_time(1e-3)
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    let window = window_ns / t_f;
    let (prop, mut stats) = Propagator::new(&problem, cfg)?;
    // Nodes in u with x = window u^2 cluster near zero lag, where C varies fastest.
    let rule: Vec<(f64, f64)> = FixedRule::new(cfg.memory_nodes).mapped(0.0, 1.0).collect();
    let rho0 = problem.initial_state(Some(env), cfg.initial);
    let segments = contiguous_segments(&problem.breakpoints(cfg), pause.tau_final());
    let scale = Complex64::from(t_f * t_f);
    let out = run_segments(&problem, rho0, cfg, &segments, |_, r| r, |tau, rho| {
        let at = problem.instant(tau);
        let h = problem.hamiltonian(&at, true);
        let mut drho = (h * rho - rho * h) * (-I);
        let ops_now = model.coupling_operators(at.s);
        let reach = tau.min(window);
        if reach <= 0.0 {
            return drho;
        }
        let u_now = prop.at(tau);
        let mut lambdas = vec![Op::zeros(); ops_now.len()];
        for &(u, w) in &rule {
            let x = reach * u * u;
            let weight = w * 2.0 * reach * u;
            let earlier = tau - x;
            let (s_prev, _) = pause.map_unchecked(earlier);
            let u_rel = u_now * prop.at(earlier).adjoint();
            let c = kernel.eval(t_f * x) * weight;
            for (lam, op) in lambdas.iter_mut().zip(model.coupling_operators(s_prev)) {
                *lam += u_rel * op * u_rel.adjoint() * c;
            }
        }
        for (s_op, lam) in ops_now.iter().zip(&lambdas) {
            let lam_rho = lam * rho;
            let rho_lam_dag = rho * lam.adjoint();
            let comm = s_op * lam_rho - lam_rho * s_op + rho_lam_dag * s_op - s_op * rho_lam_dag;
            drho -= comm * scale;
        }
        drho
    })?;
    stats += out.1;
    Ok(finish(SolverKind::Redfield, None, &problem, (out.0, stats), warnings))
}

/// Dispatches to the evolution selected by `kind`.
pub fn evolve(
    kind: SolverKind,
    model: &AnnealModel,
    pause: PauseSpec,
    env: Option<&Environment>,
    t_f: f64,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    if kind == SolverKind::Closed {
        return evolve_closed(model, pause, t_f, cfg);
    }
    let env = env.ok_or_else(|| Error::Argument(format!("{} needs a bath", kind.name())))?;
    match kind {
        SolverKind::Ame => evolve_ame(model, pause, env, t_f, cfg),
        SolverKind::RedfieldRwa => evolve_redfield_rwa(model, pause, env, t_f, cfg),
        SolverKind::Redfield => evolve_redfield(model, pause, env, t_f, cfg),
        SolverKind::Closed => unreachable!(),
    }
}

/// One sweep point; errors are kept per point.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub position: f64,
    pub success: Result<f64>,
}

/// Success probability against pause position at fixed duration, evaluated in parallel.
pub fn sweep_pause(
    kind: SolverKind,
    model: &AnnealModel,
    env: Option<&Environment>,
    t_f: f64,
    duration: f64,
    positions: &[f64],
    cfg: &SolverConfig,
) -> Vec<SweepPoint> {
    positions
        .par_iter()
        .map(|&sp| SweepPoint {
            position: sp,
            success: PauseSpec::new(sp, duration)
                .and_then(|p| evolve(kind, model, p, env, t_f, cfg))
                .map(|t| success_probability(&t)),
        })
        .collect()
}

/// Relaxation rate `sum_a gamma(Omega) |S_a^{01}|^2` in rad/ns.
pub fn relaxation_rate(model: &AnnealModel, bath: &BathSpec, s: f64) -> f64 {
    bath.gamma(model.omega(s)) * model.relaxation_weight(s)
}

/// Cyclic frequency helper for reports.
pub fn to_ghz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}
