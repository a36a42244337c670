//! Adiabatic-frame two-level models: analytic families, single-qubit schedules, and
//! projections of multi-level Hamiltonians via gauge-fixed eigenvector tracking.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::interp::CubicSpline;
use crate::schedules::{five_point_derivative, AngularSchedule, GapSchedule};
use crate::spin::{commutator, pauli_combination, real_op, sigma_y, Op};

/// Gap profile Omega(s) in rad/ns.
#[derive(Debug, Clone)]
pub enum GapProfile {
    Gaussian(GapSchedule),
    Tabulated(CubicSpline),
}

impl GapProfile {
    pub fn value(&self, s: f64) -> f64 {
        match self {
            Self::Gaussian(g) => g.gap(s),
            Self::Tabulated(sp) => sp.eval(s),
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            Self::Gaussian(g) => g.gap_derivative(s),
            Self::Tabulated(_) => five_point_derivative(&|x| self.value(x), s, 1e-5),
        }
    }
}

/// Angular progression and the accumulated annealing angle.
#[derive(Debug, Clone)]
pub enum AngleProfile {
    Gaussian(AngularSchedule),
    /// Constant rate with theta(s) = rate * s.
    Constant { rate: f64 },
    Tabulated { rate: CubicSpline, angle: CubicSpline },
}

impl AngleProfile {
    pub fn rate(&self, s: f64) -> f64 {
        match self {
            Self::Gaussian(a) => a.angular_progression(s),
            Self::Constant { rate } => *rate,
            Self::Tabulated { rate, .. } => rate.eval(s),
        }
    }

    pub fn angle(&self, s: f64) -> f64 {
        match self {
            Self::Gaussian(a) => a.annealing_angle(s),
            Self::Constant { rate } => rate * s,
            Self::Tabulated { angle, .. } => angle.eval(s),
        }
    }
}

/// System-bath coupling operator as seen in the adiabatic frame.
#[derive(Debug, Clone)]
pub enum Coupling {
    /// Fixed lab-frame operator `x X + y Y + z Z`, rotated with the annealing angle.
    Lab { x: f64, y: f64, z: f64 },
    /// Projected real matrix elements tabulated against s.
    Tabulated {
        ground: CubicSpline,
        mixed: CubicSpline,
        excited: CubicSpline,
    },
}

/// Lab-to-adiabatic frame rotation for annealing angle `theta`.
///
/// The lab Hamiltonian `-(Omega/2)(cos(theta) X + sin(theta) Z)` becomes `-(Omega/2) Z`.
pub fn frame_rotation(theta: f64) -> Op {
    let half = 0.5 * (FRAC_PI_2 - theta);
    let (sn, cs) = half.sin_cos();
    real_op(cs, -sn, sn, cs)
}

/// Location and width of the angular-progression pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseWindow {
    pub center: f64,
    pub width: f64,
}

impl PulseWindow {
    /// Edges `center -/+ c width` of the Landau-Zener region.
    pub fn edges(&self, c: f64) -> (f64, f64) {
        (self.center - c * self.width, self.center + c * self.width)
    }
}

/// Complete two-level problem definition in the adiabatic frame.
#[derive(Debug, Clone)]
pub struct AnnealModel {
    pub gap: GapProfile,
    pub angle: AngleProfile,
    pub couplings: Vec<Coupling>,
    pub pulse: Option<PulseWindow>,
}

impl AnnealModel {
    /// Gaussian gap and pulse, with independent X and Z couplings.
    pub fn gaussian(gap: GapSchedule, angle: AngularSchedule) -> Self {
        Self {
            gap: GapProfile::Gaussian(gap),
            angle: AngleProfile::Gaussian(angle),
            couplings: xz_couplings(),
            pulse: Some(PulseWindow {
                center: angle.center,
                width: angle.width,
            }),
        }
    }

    /// Gaussian gap swept at a constant angular rate.
    pub fn constant_rate(gap: GapSchedule, rate: f64) -> Self {
        Self {
            gap: GapProfile::Gaussian(gap),
            angle: AngleProfile::Constant { rate },
            couplings: xz_couplings(),
            pulse: None,
        }
    }

    pub fn with_couplings(mut self, couplings: Vec<Coupling>) -> Self {
        self.couplings = couplings;
        self
    }

    pub fn omega(&self, s: f64) -> f64 {
        self.gap.value(s)
    }

    pub fn omega_derivative(&self, s: f64) -> f64 {
        self.gap.derivative(s)
    }

    pub fn dtheta(&self, s: f64) -> f64 {
        self.angle.rate(s)
    }

    pub fn theta(&self, s: f64) -> f64 {
        self.angle.angle(s)
    }

    /// Virtual gap sqrt(dtheta^2 / t_f^2 + Omega^2) in rad/ns.
    pub fn virtual_gap(&self, s: f64, t_f: f64) -> f64 {
        let r = self.dtheta(s) / t_f;
        (r * r + self.omega(s).powi(2)).sqrt()
    }

    /// True when every ingredient has a closed-form derivative.
    pub fn is_analytic(&self) -> bool {
        matches!(self.gap, GapProfile::Gaussian(_))
            && !matches!(self.angle, AngleProfile::Tabulated { .. })
            && self.couplings.iter().all(|c| matches!(c, Coupling::Lab { .. }))
    }

    /// Coupling operators in the adiabatic frame at s.
    pub fn coupling_operators(&self, s: f64) -> Vec<Op> {
        let mut out = Vec::with_capacity(self.couplings.len());
        let mut rotation = None;
        for c in &self.couplings {
            out.push(match c {
                Coupling::Lab { x, y, z } => {
                    let v = *rotation.get_or_insert_with(|| frame_rotation(self.theta(s)));
                    v.adjoint() * pauli_combination(*x, *y, *z) * v
                }
                Coupling::Tabulated {
                    ground,
                    mixed,
                    excited,
                } => {
                    let m = mixed.eval(s);
                    real_op(ground.eval(s), m, m, excited.eval(s))
                }
            });
        }
        out
    }

    /// Sum over couplings of |S^{01}|^2.
    pub fn relaxation_weight(&self, s: f64) -> f64 {
        self.coupling_operators(s).iter().map(|o| o[(0, 1)].norm_sqr()).sum()
    }

    /// Sum over couplings of (S^{00} - S^{11})^2.
    pub fn dephasing_weight(&self, s: f64) -> f64 {
        self.coupling_operators(s)
            .iter()
            .map(|o| (o[(0, 0)].re - o[(1, 1)].re).powi(2))
            .sum()
    }

    /// d/ds of [`Self::relaxation_weight`].
    pub fn relaxation_weight_derivative(&self, s: f64) -> f64 {
        if !self.couplings.iter().all(|c| matches!(c, Coupling::Lab { .. })) {
            return five_point_derivative(&|x| self.relaxation_weight(x), s, 1e-5);
        }
        let theta = self.theta(s);
        let v = frame_rotation(theta);
        let rate = self.dtheta(s);
        let y = sigma_y();
        let mut acc = 0.0;
        for c in &self.couplings {
            if let Coupling::Lab { x, y: yy, z } = c {
                let lab = pauli_combination(*x, *yy, *z);
                let op = v.adjoint() * lab * v;
                let d_op = v.adjoint() * commutator(&lab, &y) * v * Complex64::new(0.0, 0.5);
                acc += 2.0 * (op[(0, 1)].conj() * d_op[(0, 1)]).re * rate;
            }
        }
        acc
    }
}

fn xz_couplings() -> Vec<Coupling> {
    vec![
        Coupling::Lab {
            x: 1.0,
            y: 0.0,
            z: 0.0,
        },
        Coupling::Lab {
            x: 0.0,
            y: 0.0,
            z: 1.0,
        },
    ]
}

/// Builds a tabulated model from lab schedules `H = -(A X + B Z)/2`.
///
/// `a` and `b` are in rad/ns; the angle is unwrapped continuously from atan2(B, A).
pub fn from_single_qubit<A, B>(a: A, b: B, points: usize) -> Result<AnnealModel>
where
    A: Fn(f64) -> f64,
    B: Fn(f64) -> f64,
{
    if points < 4 {
        return Err(Error::Argument("need at least 4 grid points".into()));
    }
    let grid: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
    let mut omega = Vec::with_capacity(points);
    let mut theta = Vec::with_capacity(points);
    let mut rate = Vec::with_capacity(points);
    let h = 1e-6;
    let mut prev: Option<f64> = None;
    for &s in &grid {
        let (av, bv) = (a(s), b(s));
        let om = av.hypot(bv);
        if om <= 1e-300 || !om.is_finite() {
            return Err(Error::Degenerate { s, gap: om });
        }
        let raw = bv.atan2(av);
        let th = match prev {
            None => raw,
            Some(p) => raw + (2.0 * std::f64::consts::PI) * ((p - raw) / (2.0 * std::f64::consts::PI)).round(),
        };
        prev = Some(th);
        // Central differences, one-sided at the ends.
        let (lo, hi) = ((s - h).max(0.0), (s + h).min(1.0));
        let da = (a(hi) - a(lo)) / (hi - lo);
        let db = (b(hi) - b(lo)) / (hi - lo);
        omega.push(om);
        theta.push(th);
        rate.push((av * db - bv * da) / (om * om));
    }
    Ok(AnnealModel {
        gap: GapProfile::Tabulated(CubicSpline::new(grid.clone(), omega)?),
        angle: AngleProfile::Tabulated {
            rate: CubicSpline::new(grid.clone(), rate)?,
            angle: CubicSpline::new(grid, theta)?,
        },
        couplings: xz_couplings(),
        pulse: None,
    })
}

/// Parameterized real symmetric Hamiltonian family H(s) on [0, 1].
pub trait HamiltonianFamily: Sync {
    fn dim(&self) -> usize;
    fn hamiltonian(&self, s: f64) -> DMatrix<f64>;
    /// dH/ds; fourth-order central differences unless overridden.
    fn derivative(&self, s: f64) -> DMatrix<f64> {
        let h = 1e-4;
        (self.hamiltonian(s - 2.0 * h) - self.hamiltonian(s - h) * 8.0 + self.hamiltonian(s + h) * 8.0
            - self.hamiltonian(s + 2.0 * h))
            / (12.0 * h)
    }
}

/// Wraps a closure as a Hamiltonian family with numerical derivatives.
pub struct TabulatedFamily<F> {
    dim: usize,
    build: F,
}

impl<F: Fn(f64) -> DMatrix<f64> + Sync> TabulatedFamily<F> {
    pub fn new(dim: usize, build: F) -> Self {
        Self { dim, build }
    }
}

impl<F: Fn(f64) -> DMatrix<f64> + Sync> HamiltonianFamily for TabulatedFamily<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn hamiltonian(&self, s: f64) -> DMatrix<f64> {
        (self.build)(s)
    }
}

/// Ferromagnetic p-spin model in the symmetric subspace with linear schedules:
/// `H(s) = -(1 - s) sum_i X_i - s n (sum_i Z_i / n)^p`.
#[derive(Debug, Clone)]
pub struct PSpin {
    n: usize,
    p: u32,
    driver: DMatrix<f64>,
    problem: DMatrix<f64>,
}

impl PSpin {
    pub fn new(n: usize, p: u32) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::Argument("p-spin needs n >= 1 and p >= 1".into()));
        }
        if p as usize > n {
            return Err(Error::Argument(format!("interaction order p = {p} exceeds n = {n}")));
        }
        let dim = n + 1;
        let spin = n as f64 / 2.0;
        let mut driver = DMatrix::zeros(dim, dim);
        let mut problem = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            let m = k as f64 - spin;
            // sum_i Z_i = 2 S_z
            problem[(k, k)] = -(n as f64) * (2.0 * m / n as f64).powi(p as i32);
            if k + 1 < dim {
                // <m+1|S_+|m> and sum_i X_i = S_+ + S_-
                let up = (spin * (spin + 1.0) - m * (m + 1.0)).sqrt();
                driver[(k + 1, k)] = -up;
                driver[(k, k + 1)] = -up;
            }
        }
        Ok(Self {
            n,
            p,
            driver,
            problem,
        })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> u32 {
        self.p
    }
}

impl HamiltonianFamily for PSpin {
    fn dim(&self) -> usize {
        self.n + 1
    }

    fn hamiltonian(&self, s: f64) -> DMatrix<f64> {
        &self.driver * (1.0 - s) + &self.problem * s
    }

    fn derivative(&self, _s: f64) -> DMatrix<f64> {
        &self.problem - &self.driver
    }
}

/// Options for [`geometric_terms`].
#[derive(Debug, Clone)]
pub struct TrackingOptions {
    /// Intervals of s where near-degeneracy is expected and tolerated.
    pub degenerate_intervals: Vec<(f64, f64)>,
    /// Gap threshold, relative to the largest |eigenvalue| at s = 0.
    pub degeneracy_threshold: f64,
    /// Only degeneracies among this many lowest levels are errors; terms coupling a
    /// tracked level to a degenerate untracked one are dropped. `None` tracks every level.
    pub tracked_levels: Option<usize>,
    /// Levels whose coupling term drives adaptive refinement.
    pub refine_levels: Option<(usize, usize)>,
    /// Relative change of the refined term below which a grid interval is accepted.
    pub refine_tol: f64,
    pub max_refinements: usize,
}

impl Default for TrackingOptions {
    fn default() -> Self {
        Self {
            degenerate_intervals: Vec::new(),
            degeneracy_threshold: 1e-10,
            tracked_levels: None,
            refine_levels: Some((0, 1)),
            refine_tol: 5e-3,
            max_refinements: 12,
        }
    }
}

/// Eigen-data along a grid with continuous eigenvector signs.
#[derive(Debug, Clone)]
pub struct SpectrumTrajectory {
    pub grid: Vec<f64>,
    pub energies: Vec<DVector<f64>>,
    pub vectors: Vec<DMatrix<f64>>,
    /// `coupling[k][(m, n)] = <m | d n / ds>` at grid point k.
    pub coupling: Vec<DMatrix<f64>>,
}

struct Snapshot {
    energies: DVector<f64>,
    vectors: DMatrix<f64>,
    derivative: DMatrix<f64>,
}

fn snapshot<H: HamiltonianFamily + ?Sized>(family: &H, s: f64) -> Snapshot {
    let eig = SymmetricEigen::new(family.hamiltonian(s));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let energies = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    Snapshot {
        energies,
        vectors,
        derivative: family.derivative(s),
    }
}

fn coupling_matrix(
    snap: &Snapshot,
    s: f64,
    threshold: f64,
    flagged: &[(f64, f64)],
    tracked: Option<usize>,
) -> Result<DMatrix<f64>> {
    let dim = snap.energies.len();
    let tracked = tracked.unwrap_or(dim).min(dim);
    let projected = snap.vectors.transpose() * &snap.derivative * &snap.vectors;
    let mut out = DMatrix::zeros(dim, dim);
    let inside = flagged.iter().any(|&(a, b)| s >= a && s <= b);
    for m in 0..dim {
        for n in 0..dim {
            if m == n {
                continue;
            }
            let gap = snap.energies[n] - snap.energies[m];
            if gap.abs() < threshold {
                if inside || m >= tracked || n >= tracked {
                    // Degenerate pair inside a declared interval or outside the tracked
                    // levels: the term is dropped.
                    continue;
                }
                return Err(Error::Degenerate { s, gap: gap.abs() });
            }
            out[(m, n)] = projected[(m, n)] / gap;
        }
    }
    Ok(out)
}

/// Makes eigenvector columns continuous along a grid: the largest component of each column
/// is positive at the first point, then each column has positive overlap with its predecessor.
pub fn fix_signs(vectors: &mut [DMatrix<f64>]) {
    for k in 0..vectors.len() {
        for n in 0..vectors[k].ncols() {
            let flip = if k == 0 {
                let col = vectors[0].column(n);
                col[col.iamax()] < 0.0
            } else {
                let prev = vectors[k - 1].column(n).into_owned();
                vectors[k].column(n).dot(&prev) < 0.0
            };
            if flip {
                vectors[k].column_mut(n).neg_mut();
            }
        }
    }
}

/// Eigen-decomposes `family` on `grid` (refined adaptively), fixes eigenvector signs by
/// overlap with the previous point, and evaluates `<m|dn/ds> = <m|H'|n> / (E_n - E_m)`.
pub fn geometric_terms<H: HamiltonianFamily + ?Sized>(
    family: &H,
    grid: &[f64],
    opts: &TrackingOptions,
) -> Result<SpectrumTrajectory> {
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument("grid must hold at least two increasing points".into()));
    }
    let mut points: Vec<(f64, Snapshot)> = grid.par_iter().map(|&s| (s, snapshot(family, s))).collect();
    let scale = points[0].1.energies.iter().fold(0.0f64, |m, e| m.max(e.abs())).max(1e-300);
    let threshold = opts.degeneracy_threshold * scale;

    let term = |snap: &Snapshot, s: f64| -> Result<f64> {
        let (m, n) = opts.refine_levels.unwrap_or((0, 1));
        Ok(coupling_matrix(snap, s, threshold, &opts.degenerate_intervals, opts.tracked_levels)?[(m, n)])
    };

    if opts.refine_levels.is_some() && family.dim() >= 2 {
        for _ in 0..opts.max_refinements {
            let mut peak = 0.0f64;
            let mut values = Vec::with_capacity(points.len());
            for (s, snap) in &points {
                let v = term(snap, *s)?.abs();
                peak = peak.max(v);
                values.push(v);
            }
            let mids: Vec<f64> = points.windows(2).map(|w| 0.5 * (w[0].0 + w[1].0)).collect();
            let mid_snaps: Vec<Snapshot> = mids.par_iter().map(|&s| snapshot(family, s)).collect();
            let mut inserted = Vec::new();
            for (k, (s, snap)) in mids.iter().zip(mid_snaps).enumerate() {
                let v = term(&snap, *s)?.abs();
                let linear = 0.5 * (values[k] + values[k + 1]);
                if (v - linear).abs() > opts.refine_tol * v.max(1e-3 * peak) {
                    inserted.push((*s, snap));
                }
            }
            if inserted.is_empty() {
                break;
            }
            points.extend(inserted);
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
    }

    let mut vectors: Vec<DMatrix<f64>> = points.iter().map(|(_, p)| p.vectors.clone()).collect();
    fix_signs(&mut vectors);
    for ((_, snap), v) in points.iter_mut().zip(vectors) {
        snap.vectors = v;
    }

    let mut out = SpectrumTrajectory {
        grid: Vec::with_capacity(points.len()),
        energies: Vec::with_capacity(points.len()),
        vectors: Vec::with_capacity(points.len()),
        coupling: Vec::with_capacity(points.len()),
    };
    for (s, snap) in points {
        let c = coupling_matrix(&snap, s, threshold, &opts.degenerate_intervals, opts.tracked_levels)?;
        out.grid.push(s);
        out.coupling.push(c);
        out.energies.push(snap.energies);
        out.vectors.push(snap.vectors);
    }
    Ok(out)
}

/// Projects a tracked spectrum onto its two lowest levels.
///
/// `margin` is the smallest admissible separation E2 - E1. The excited-state sign is chosen
/// globally so that the accumulated angle is non-negative.
pub fn project_tls(
    traj: &SpectrumTrajectory,
    operators: &[DMatrix<f64>],
    margin: f64,
) -> Result<AnnealModel> {
    let n = traj.grid.len();
    if n < 4 {
        return Err(Error::Argument("projection needs at least 4 grid points".into()));
    }
    let dim = traj.energies[0].len();
    if dim < 2 {
        return Err(Error::Argument("projection needs at least two levels".into()));
    }
    if dim > 2 {
        let (worst_k, worst) = traj
            .energies
            .iter()
            .enumerate()
            .map(|(k, e)| (k, e[2] - e[1]))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty grid");
        if worst < margin {
            return Err(Error::Truncation {
                s: traj.grid[worst_k],
                margin: worst,
            });
        }
    }
    let grid = traj.grid.clone();
    let omega: Vec<f64> = traj.energies.iter().map(|e| e[1] - e[0]).collect();
    let mut rate: Vec<f64> = traj.coupling.iter().map(|c| 2.0 * c[(0, 1)]).collect();
    let rate_spline = CubicSpline::new(grid.clone(), rate.clone())?;
    let mut theta = rate_spline.cumulative_integral();
    let sign = if theta[n - 1] < 0.0 { -1.0 } else { 1.0 };
    if sign < 0.0 {
        rate.iter_mut().for_each(|r| *r = -*r);
        theta.iter_mut().for_each(|t| *t = -*t);
    }

    let mut couplings = Vec::with_capacity(operators.len());
    for op in operators {
        if op.nrows() != dim || op.ncols() != dim {
            return Err(Error::Argument(format!(
                "coupling operator is {}x{}, expected {dim}x{dim}",
                op.nrows(),
                op.ncols()
            )));
        }
        let mut g = Vec::with_capacity(n);
        let mut m = Vec::with_capacity(n);
        let mut e = Vec::with_capacity(n);
        for v in &traj.vectors {
            let v0 = v.column(0);
            let v1 = v.column(1) * sign;
            g.push(v0.dot(&(op * v0)));
            m.push(v0.dot(&(op * &v1)));
            e.push(v1.dot(&(op * &v1)));
        }
        couplings.push(Coupling::Tabulated {
            ground: CubicSpline::new(grid.clone(), g)?,
            mixed: CubicSpline::new(grid.clone(), m)?,
            excited: CubicSpline::new(grid.clone(), e)?,
        });
    }

    Ok(AnnealModel {
        gap: GapProfile::Tabulated(CubicSpline::new(grid.clone(), omega)?),
        angle: AngleProfile::Tabulated {
            rate: CubicSpline::new(grid.clone(), rate)?,
            angle: CubicSpline::new(grid, theta)?,
        },
        couplings,
        pulse: None,
    })
}

/// Operator `sum_i sigma_i` of the chosen axis in the symmetric subspace of `n` spins.
pub fn collective_operator(n: usize, axis: char) -> Result<DMatrix<f64>> {
    let dim = n + 1;
    let spin = n as f64 / 2.0;
    let mut out = DMatrix::zeros(dim, dim);
    match axis {
        'z' => {
            for k in 0..dim {
                out[(k, k)] = 2.0 * (k as f64 - spin);
            }
        }
        'x' => {
            for k in 0..n {
                let m = k as f64 - spin;
                let up = (spin * (spin + 1.0) - m * (m + 1.0)).sqrt();
                out[(k + 1, k)] = up;
                out[(k, k + 1)] = up;
            }
        }
        other => return Err(Error::Argument(format!("unsupported collective axis '{other}'"))),
    }
    Ok(out)
}

/// Location of the largest angular progression and the angle accumulated across
/// `[peak - half_width, peak + half_width]`.
pub fn angle_jump(model: &AnnealModel, grid: &[f64], half_width: f64) -> (f64, f64) {
    let peak = grid
        .iter()
        .copied()
        .max_by(|a, b| model.dtheta(*a).abs().total_cmp(&model.dtheta(*b).abs()))
        .unwrap_or(0.0);
    let lo = (peak - half_width).max(0.0);
    let hi = (peak + half_width).min(1.0);
    (peak, model.theta(hi) - model.theta(lo))
}
