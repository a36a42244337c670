//! Experiment configuration: TOML sections parsed with serde, then resolved into
//! validated core types before any computation starts.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tls_anneal::bath::{BathSpec, CutoffConvention, SpectralOptions};
use tls_anneal::frames::{
    collective_operator, from_single_qubit, geometric_terms, project_tls, AngleProfile, AnnealModel, Coupling,
    GapProfile, PSpin, TrackingOptions,
};
use tls_anneal::interp::CubicSpline;
use tls_anneal::schedules::{AngularSchedule, BoundaryAngle, GapSchedule, PauseSpec};
use tls_anneal::solvers::{AmeMode, InitialState, SolverConfig, SolverKind};
use tls_anneal::units::ghz_to_rad_per_ns;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub schedule: Option<ScheduleSection>,
    pub bath: Option<BathSection>,
    #[serde(default)]
    pub model: ModelSection,
    pub solve: Option<SolveSection>,
    pub sweep: Option<SweepSection>,
    pub theorem: Option<TheoremSection>,
    pub epsilon: Option<EpsilonSection>,
    pub project: Option<ProjectSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(rename = "E0_GHz")]
    pub e0_ghz: f64,
    pub delta: f64,
    pub mu_g: f64,
    pub alpha_g: f64,
    pub mu_theta: f64,
    pub alpha_theta: f64,
    pub theta_end: ThetaEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaEnd {
    HalfPi,
    Pi,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    /// `2 pi eta g^2`, the dimensionless coupling as usually quoted.
    pub two_pi_eta_g2: Option<f64>,
    /// `eta g^2 / (2 pi)`; alternative to `two_pi_eta_g2`.
    pub eta_g2_over_2pi: Option<f64>,
    #[serde(rename = "T_mK")]
    pub t_mk: f64,
    #[serde(rename = "omega_c_GHz")]
    pub omega_c_ghz: f64,
    pub pv_window_factor: Option<f64>,
    pub quad_tol: Option<f64>,
    #[serde(default)]
    pub cutoff: CutoffKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffKind {
    #[default]
    Symmetric,
    Printed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    AnalyticGaussian,
    SingleQubitLinear,
    ConstantDtheta,
    Pspin,
    Tabulated,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub kind: ModelKind,
    /// constant_dtheta: angular rate, default pi/2.
    pub dtheta: Option<f64>,
    /// single_qubit_linear: `A(s) = A_GHz (1 - s)`, `B(s) = B_GHz s`.
    #[serde(rename = "A_GHz")]
    pub a_ghz: Option<f64>,
    #[serde(rename = "B_GHz")]
    pub b_ghz: Option<f64>,
    /// pspin
    pub n: Option<usize>,
    pub p: Option<u32>,
    /// pspin: energy unit of the dimensionless Hamiltonian.
    #[serde(rename = "scale_GHz")]
    pub scale_ghz: Option<f64>,
    /// Grid size for tabulated families.
    pub points: Option<usize>,
    pub margin: Option<f64>,
    pub tracked_levels: Option<usize>,
    /// tabulated: CSV written by `project`.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    /// Solver name, or "all".
    pub kind: String,
    pub t_f_ns: f64,
    #[serde(default = "one")]
    pub s_p: f64,
    #[serde(default)]
    pub s_d: f64,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub max_step: Option<f64>,
    #[serde(default)]
    pub ame_mode: AmeModeKind,
    #[serde(default)]
    pub initial: InitialKind,
    pub lamb_shift: Option<bool>,
    pub samples: Option<usize>,
    pub memory_nodes: Option<usize>,
    pub memory_correlation_times: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmeModeKind {
    #[default]
    Full,
    DeltaPulse,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    #[default]
    Ground,
    Thermal,
}

/// Evenly spaced grid, or an explicit list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Range { start: f64, stop: f64, points: usize },
    List(Vec<f64>),
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::List(v) => v.clone(),
            Self::Range { start, stop, points } => match points {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub s_p: GridSpec,
    pub s_d: f64,
    /// Solver names; defaults to the `[solve]` kind.
    pub kinds: Option<Vec<String>>,
    #[serde(default)]
    pub analytic: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremSection {
    pub s_d: f64,
    #[serde(default = "two")]
    pub c: f64,
    #[serde(default = "grid_points")]
    pub grid_points: usize,
    /// Bath cutoffs to scan; defaults to the `[bath]` cutoff.
    #[serde(rename = "cutoffs_GHz")]
    pub cutoffs_ghz: Option<Vec<f64>>,
    /// Additional randomized Gaussian instances drawn from `seed`.
    #[serde(default)]
    pub random_instances: usize,
}

fn two() -> f64 {
    2.0
}

fn grid_points() -> usize {
    41
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSection {
    #[serde(rename = "omega_c_GHz")]
    pub omega_c_ghz: GridSpec,
    #[serde(rename = "T_mK")]
    pub t_mk: GridSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectSection {
    /// Collective coupling axes, any of "x" and "z".
    #[serde(default = "xz")]
    pub couplings: Vec<String>,
}

fn xz() -> Vec<String> {
    vec!["x".into(), "z".into()]
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Resolved config as `#`-prefixed TOML lines.
    pub fn echo(&self) -> String {
        toml::to_string(self)
            .unwrap_or_default()
            .lines()
            .map(|l| format!("# {l}\n"))
            .collect()
    }

    pub fn schedule(&self) -> Result<&ScheduleSection, CliError> {
        self.schedule.as_ref().ok_or_else(|| missing("schedule"))
    }

    pub fn solve(&self) -> Result<&SolveSection, CliError> {
        self.solve.as_ref().ok_or_else(|| missing("solve"))
    }
}

fn missing(section: &str) -> CliError {
    CliError::Config(format!("missing section [{section}]"))
}

fn config_err(e: tls_anneal::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

impl ScheduleSection {
    pub fn gap(&self) -> Result<GapSchedule, CliError> {
        GapSchedule::new(ghz_to_rad_per_ns(positive("E0_GHz", self.e0_ghz)?), self.delta, self.mu_g, self.alpha_g)
            .map_err(config_err)
    }

    pub fn angle(&self) -> Result<AngularSchedule, CliError> {
        let b = match self.theta_end {
            ThetaEnd::HalfPi => BoundaryAngle::HalfPi,
            ThetaEnd::Pi => BoundaryAngle::Pi,
        };
        AngularSchedule::new(self.mu_theta, self.alpha_theta, b).map_err(config_err)
    }
}

impl BathSection {
    pub fn spec(&self) -> Result<BathSpec, CliError> {
        self.spec_with(self.t_mk, self.omega_c_ghz)
    }

    pub fn spec_with(&self, t_mk: f64, omega_c_ghz: f64) -> Result<BathSpec, CliError> {
        let coupling = match (self.two_pi_eta_g2, self.eta_g2_over_2pi) {
            (Some(v), None) => v,
            (None, Some(v)) => v * 4.0 * PI * PI,
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "[bath] set only one of two_pi_eta_g2 and eta_g2_over_2pi".into(),
                ))
            }
            (None, None) => return Err(CliError::Config("[bath] missing key two_pi_eta_g2".into())),
        };
        let convention = match self.cutoff {
            CutoffKind::Symmetric => CutoffConvention::Symmetric,
            CutoffKind::Printed => CutoffConvention::Printed,
        };
        Ok(BathSpec::from_lab_units(coupling, t_mk, positive("omega_c_GHz", omega_c_ghz)?)
            .map_err(config_err)?
            .with_convention(convention))
    }

    pub fn spectral(&self) -> Result<SpectralOptions, CliError> {
        let d = SpectralOptions::default();
        Ok(SpectralOptions {
            window_factor: self.pv_window_factor.map_or(Ok(d.window_factor), |v| positive("pv_window_factor", v))?,
            abs_tol: self.quad_tol.map_or(Ok(d.abs_tol), |v| positive("quad_tol", v))?,
        })
    }
}

pub fn parse_kinds(spec: &str) -> Result<Vec<SolverKind>, CliError> {
    if spec == "all" {
        return Ok(SolverKind::ALL.to_vec());
    }
    spec.parse().map(|k| vec![k]).map_err(config_err)
}

impl SolveSection {
    pub fn kinds(&self) -> Result<Vec<SolverKind>, CliError> {
        parse_kinds(&self.kind)
    }

    pub fn t_f(&self) -> Result<f64, CliError> {
        positive("t_f_ns", self.t_f_ns)
    }

    pub fn pause(&self) -> Result<PauseSpec, CliError> {
        PauseSpec::new(self.s_p, self.s_d).map_err(config_err)
    }

    pub fn solver_config(&self, bath: Option<&BathSection>) -> Result<SolverConfig, CliError> {
        let mut cfg = SolverConfig::default();
        if let Some(v) = self.rel_tol {
            cfg.ode.rel_tol = v;
        }
        if let Some(v) = self.abs_tol {
            cfg.ode.abs_tol = v;
        }
        if let Some(v) = self.max_step {
            cfg.ode.max_step = v;
        }
        cfg.ame_mode = match self.ame_mode {
            AmeModeKind::Full => AmeMode::Full,
            AmeModeKind::DeltaPulse => AmeMode::DeltaPulse,
        };
        cfg.initial = match self.initial {
            InitialKind::Ground => InitialState::Ground,
            InitialKind::Thermal => InitialState::Thermal,
        };
        if let Some(v) = self.lamb_shift {
            cfg.lamb_shift = v;
        }
        if let Some(v) = self.samples {
            cfg.samples = v;
        }
        if let Some(v) = self.memory_nodes {
            cfg.memory_nodes = v;
        }
        if let Some(v) = self.memory_correlation_times {
            cfg.memory_correlation_times = v;
        }
        if let Some(b) = bath {
            cfg.spectral = b.spectral()?;
        }
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }
}

/// Parameters of a p-spin projection, checked but not yet computed.
#[derive(Debug, Clone)]
pub struct PSpinPlan {
    pub family: PSpin,
    pub scale: f64,
    pub points: usize,
    pub margin: f64,
    pub tracked_levels: Option<usize>,
    pub operators: Vec<String>,
}

impl PSpinPlan {
    pub fn project(&self) -> Result<AnnealModel, tls_anneal::Error> {
        let grid: Vec<f64> = (0..self.points).map(|i| i as f64 / (self.points - 1) as f64).collect();
        let opts = TrackingOptions {
            tracked_levels: self.tracked_levels,
            ..TrackingOptions::default()
        };
        let traj = geometric_terms(&self.family, &grid, &opts)?;
        let n = self.family.qubits();
        let ops = self
            .operators
            .iter()
            .map(|a| collective_operator(n, a.chars().next().unwrap_or('?')))
            .collect::<Result<Vec<_>, _>>()?;
        let model = project_tls(&traj, &ops, self.margin)?;
        scale_gap(model, self.scale)
    }
}

fn scale_gap(mut model: AnnealModel, scale: f64) -> Result<AnnealModel, tls_anneal::Error> {
    if let GapProfile::Tabulated(sp) = &model.gap {
        let values = sp.values().iter().map(|v| v * scale).collect();
        model.gap = GapProfile::Tabulated(CubicSpline::new(sp.knots().to_vec(), values)?);
    }
    Ok(model)
}

/// Model description resolved far enough to be known valid.
#[derive(Debug, Clone)]
pub enum ModelPlan {
    Ready(AnnealModel),
    PSpin(PSpinPlan),
}

impl ModelPlan {
    pub fn build(&self) -> Result<AnnealModel, tls_anneal::Error> {
        match self {
            Self::Ready(m) => Ok(m.clone()),
            Self::PSpin(p) => p.project(),
        }
    }
}

impl ExperimentConfig {
    pub fn model_plan(&self) -> Result<ModelPlan, CliError> {
        let m = &self.model;
        match m.kind {
            ModelKind::AnalyticGaussian => {
                let s = self.schedule()?;
                Ok(ModelPlan::Ready(AnnealModel::gaussian(s.gap()?, s.angle()?)))
            }
            ModelKind::ConstantDtheta => {
                let s = self.schedule()?;
                Ok(ModelPlan::Ready(AnnealModel::constant_rate(s.gap()?, m.dtheta.unwrap_or(FRAC_PI_2))))
            }
            ModelKind::SingleQubitLinear => {
                let a = ghz_to_rad_per_ns(positive("A_GHz", m.a_ghz.ok_or_else(|| key("A_GHz"))?)?);
                let b = ghz_to_rad_per_ns(positive("B_GHz", m.b_ghz.ok_or_else(|| key("B_GHz"))?)?);
                let points = m.points.unwrap_or(401);
                from_single_qubit(move |s| a * (1.0 - s), move |s| b * s, points)
                    .map(ModelPlan::Ready)
                    .map_err(config_err)
            }
            ModelKind::Pspin => {
                let n = m.n.ok_or_else(|| key("n"))?;
                let p = m.p.ok_or_else(|| key("p"))?;
                let family = PSpin::new(n, p).map_err(config_err)?;
                let points = m.points.unwrap_or(201);
                if points < 4 {
                    return Err(CliError::Config(format!("[model] points must be at least 4, got {points}")));
                }
                let operators = self.project.as_ref().map_or_else(xz, |p| p.couplings.clone());
                for a in &operators {
                    if a != "x" && a != "z" {
                        return Err(CliError::Config(format!("[project] unknown coupling axis '{a}'")));
                    }
                }
                Ok(ModelPlan::PSpin(PSpinPlan {
                    family,
                    scale: ghz_to_rad_per_ns(positive("scale_GHz", m.scale_ghz.unwrap_or(1.0))?),
                    points,
                    margin: m.margin.unwrap_or(0.01),
                    tracked_levels: Some(m.tracked_levels.unwrap_or(3)),
                    operators,
                }))
            }
            ModelKind::Tabulated => {
                let path = m.path.as_ref().ok_or_else(|| key("path"))?;
                read_tabulated(path).map(ModelPlan::Ready)
            }
        }
    }
}

fn key(name: &str) -> CliError {
    CliError::Config(format!("[model] missing key {name}"))
}

/// Reads a model CSV written by `project`: `s, Omega, dtheta, theta` then triples of
/// coupling entries per operator.
pub fn read_tabulated(path: &Path) -> Result<AnnealModel, CliError> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let width = header.len();
    if width < 4 || (width - 4) % 3 != 0 {
        return Err(bad(format!("expected 4 + 3k columns, found {width}")));
    }
    let mut cols = vec![Vec::new(); width];
    for row in reader.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        for (k, field) in row.iter().enumerate() {
            cols[k].push(field.trim().parse::<f64>().map_err(|e| bad(format!("column {k}: {e}")))?);
        }
    }
    let spline = |k: usize| CubicSpline::new(cols[0].clone(), cols[k].clone()).map_err(|e| bad(e.to_string()));
    let omega = spline(1)?;
    let angle = AngleProfile::Tabulated {
        rate: spline(2)?,
        angle: spline(3)?,
    };
    let couplings = (0..(width - 4) / 3)
        .map(|j| {
            Ok(Coupling::Tabulated {
                ground: spline(4 + 3 * j)?,
                mixed: spline(5 + 3 * j)?,
                excited: spline(6 + 3 * j)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    if couplings.is_empty() {
        return Err(bad("no coupling columns".into()));
    }
    Ok(AnnealModel {
        gap: GapProfile::Tabulated(omega),
        angle,
        couplings,
        pulse: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[schedule]
E0_GHz = 4.7746
delta = 1e-3
mu_g = 0.5
alpha_g = 0.5
mu_theta = 0.5
alpha_theta = 0.01
theta_end = "half_pi"

[bath]
two_pi_eta_g2 = 1e-4
T_mK = 16.0
omega_c_GHz = 4.0

[solve]
kind = "all"
t_f_ns = 100.0
"#;

    #[test]
    fn parses_and_resolves() {
        let c = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(c.solve().unwrap().kinds().unwrap().len(), 4);
        let model = c.model_plan().unwrap().build().unwrap();
        assert!((model.omega(0.5) / (2.0 * PI) * 1e3 - 4.7746).abs() < 1e-3);
        let bath = c.bath.as_ref().unwrap().spec().unwrap();
        assert!((bath.eta_g2 * 2.0 * PI - 1e-4).abs() < 1e-16);
    }

    #[test]
    fn missing_key_is_named() {
        let text = BASE.replace("t_f_ns = 100.0", "");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("t_f_ns"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = BASE.replace("delta = 1e-3", "delta = 1e-3\ndelt = 2");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn coupling_conventions_agree() {
        let text = BASE.replace("two_pi_eta_g2 = 1e-4", &format!("eta_g2_over_2pi = {}", 1e-4 / (4.0 * PI * PI)));
        let c = ExperimentConfig::parse(&text).unwrap();
        let bath = c.bath.as_ref().unwrap().spec().unwrap();
        assert!((bath.eta_g2 * 2.0 * PI - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn grids_expand() {
        let g = GridSpec::Range {
            start: 0.0,
            stop: 1.0,
            points: 5,
        };
        assert_eq!(g.values(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(GridSpec::List(vec![0.3]).values(), vec![0.3]);
    }

    #[test]
    fn pspin_order_above_size_is_a_config_error() {
        let text = format!("{BASE}\n[model]\nkind = \"pspin\"\nn = 20\np = 21\n");
        let c = ExperimentConfig::parse(&text).unwrap();
        assert!(matches!(c.model_plan(), Err(CliError::Config(_))));
    }
}
