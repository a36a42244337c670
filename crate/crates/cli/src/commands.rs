//! Subcommand implementations. Each command resolves its whole configuration first and
//! only then starts computing.

use std::path::Path;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use tls_anneal::analytic::{
    analytic_population, check_assumptions, epsilon, optimize_pause, post_pulse_population, DiabaticPulse,
    PopulationModel, TheoremReport,
};
use tls_anneal::bath::BathSpec;
use tls_anneal::frames::{AnnealModel, GapProfile};
use tls_anneal::schedules::{AngularSchedule, BoundaryAngle, GapSchedule, PauseSpec};
use tls_anneal::solvers::{
    evolve, pre_pulse_population, relaxation_rate, success_probability, sweep_pause, AmeMode, Environment,
    SolverConfig, SolverKind,
};
use tls_anneal::units::rad_per_ns_to_ghz;

use crate::config::{parse_kinds, ExperimentConfig, ModelKind, ModelPlan};
use crate::error::CliError;
use crate::output::{num, opt, CsvOut};

const UNITS: &str = "units: tau and s dimensionless, Omega in rad/ns, Gamma01 in 1/ns";

fn bath_for(cfg: &ExperimentConfig, kinds: &[SolverKind]) -> Result<Option<BathSpec>, CliError> {
    match &cfg.bath {
        Some(b) => b.spec().map(Some),
        None if kinds.iter().any(|k| k.is_open()) => {
            Err(CliError::Config("missing section [bath] for an open-system solver".into()))
        }
        None => Ok(None),
    }
}

fn require_bath(cfg: &ExperimentConfig) -> Result<BathSpec, CliError> {
    cfg.bath
        .as_ref()
        .ok_or_else(|| CliError::Config("missing section [bath]".into()))?
        .spec()
}

fn require_gaussian(cfg: &ExperimentConfig, what: &str) -> Result<(), CliError> {
    if cfg.model.kind != ModelKind::AnalyticGaussian {
        return Err(CliError::Config(format!("{what} needs [model] kind = \"analytic_gaussian\"")));
    }
    Ok(())
}

/// Population model whose starting point is the ground population after the pulse.
fn population_model(
    model: &AnnealModel,
    bath: BathSpec,
    t_f: f64,
    solver: &SolverConfig,
) -> Result<PopulationModel, tls_anneal::Error> {
    let window = model
        .pulse
        .ok_or_else(|| tls_anneal::Error::Argument("model has no localized angular pulse".into()))?;
    let cfg = SolverConfig {
        ame_mode: AmeMode::DeltaPulse,
        samples: 2,
        ..solver.clone()
    };
    let p0 = pre_pulse_population(model, &Environment::new(bath), t_f, &cfg)?;
    let pulse = DiabaticPulse::for_model(model, t_f)?;
    let start = window.edges(cfg.pulse_half_width).1;
    PopulationModel::new(model.clone(), bath, t_f, post_pulse_population(p0, pulse.phi), start)
}

pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let solve = cfg.solve()?;
    let kinds = solve.kinds()?;
    let t_f = solve.t_f()?;
    let pause = solve.pause()?;
    let solver = solve.solver_config(cfg.bath.as_ref())?;
    let bath = bath_for(cfg, &kinds)?;
    let plan = cfg.model_plan()?;

    let model = plan.build()?;
    let env = bath
        .map(|b| Environment::prepare(b, &model, t_f, &kinds, &solver))
        .transpose()?;
    let mut summary = CsvOut::create(
        out,
        "summary.csv",
        cfg,
        &[],
        &["kind", "success", "accepted", "rejected", "evaluations", "warnings"],
    )?;
    for kind in kinds {
        let traj = evolve(kind, &model, pause, env.as_ref(), t_f, &solver)?;
        let mut file = CsvOut::create(
            out,
            &format!("trajectory_{}.csv", kind.name()),
            cfg,
            &[UNITS.to_string(), format!("kind = {}", kind.name())],
            &["tau", "s", "rho00", "rho01_re", "rho01_im", "Omega", "Gamma01"],
        )?;
        for st in &traj.states {
            let gamma = bath.map_or(0.0, |b| relaxation_rate(&model, &b, st.s));
            file.row([
                num(st.tau),
                num(st.s),
                num(st.rho[(0, 0)].re),
                num(st.rho[(0, 1)].re),
                num(st.rho[(0, 1)].im),
                num(model.omega(st.s)),
                num(gamma),
            ])?;
        }
        file.finish()?;
        for w in &traj.warnings {
            warn!("{}: {w}", kind.name());
        }
        let p = success_probability(&traj);
        println!(
            "{:<13} success = {p:.8}  steps = {} accepted, {} rejected",
            kind.name(),
            traj.stats.accepted,
            traj.stats.rejected
        );
        summary.row([
            kind.name().to_string(),
            num(p),
            traj.stats.accepted.to_string(),
            traj.stats.rejected.to_string(),
            traj.stats.evaluations.to_string(),
            traj.warnings.len().to_string(),
        ])?;
    }
    summary.finish()?;
    Ok(())
}

pub fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("missing section [sweep]".into()))?;
    let solve = cfg.solve()?;
    let positions = sw.s_p.values();
    if positions.is_empty() {
        return Err(CliError::Config("[sweep] s_p grid is empty".into()));
    }
    for &sp in &positions {
        PauseSpec::new(sp, sw.s_d).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let kinds = match &sw.kinds {
        Some(names) => {
            let mut v = Vec::new();
            for n in names {
                v.extend(parse_kinds(n)?);
            }
            v
        }
        None => solve.kinds()?,
    };
    let t_f = solve.t_f()?;
    let solver = solve.solver_config(cfg.bath.as_ref())?;
    let bath = bath_for(cfg, &kinds)?;
    if sw.analytic {
        require_gaussian(cfg, "the analytic column")?;
        require_bath(cfg)?;
    }
    let plan = cfg.model_plan()?;

    let model = plan.build()?;
    let env = bath
        .map(|b| Environment::prepare(b, &model, t_f, &kinds, &solver))
        .transpose()?;
    let analytic: Vec<Option<f64>> = match (sw.analytic, bath) {
        (true, Some(b)) => {
            let pm = population_model(&model, b, t_f, &solver)?;
            positions
                .par_iter()
                .map(|&sp| {
                    if sw.s_d > 0.0 && sp < pm.start {
                        return None;
                    }
                    PauseSpec::new(sp, sw.s_d)
                        .and_then(|p| analytic_population(&pm, &p))
                        .map_err(|e| warn!("analytic value at s_p = {sp}: {e}"))
                        .ok()
                })
                .collect()
        }
        _ => vec![None; positions.len()],
    };

    let mut columns = vec!["s_p", "success", "kind"];
    if sw.analytic {
        columns.push("analytic");
    }
    let mut file = CsvOut::create(out, "sweep.csv", cfg, &[], &columns)?;
    let (mut failed, mut total) = (0, 0);
    for kind in kinds {
        let points = sweep_pause(kind, &model, env.as_ref(), t_f, sw.s_d, &positions, &solver);
        for (pt, a) in points.iter().zip(&analytic) {
            total += 1;
            let success = match &pt.success {
                Ok(v) => Some(*v),
                Err(e) => {
                    failed += 1;
                    warn!("{} at s_p = {}: {e}", kind.name(), pt.position);
                    None
                }
            };
            let mut row = vec![num(pt.position), opt(success), kind.name().to_string()];
            if sw.analytic {
                row.push(opt(*a));
            }
            file.row(row)?;
        }
    }
    let path = file.finish()?;
    info!("wrote {}", path.display());
    println!("{} of {total} points evaluated, written to {}", total - failed, path.display());
    if failed > 0 {
        return Err(CliError::PartialSweep { failed, total });
    }
    Ok(())
}

struct Instance {
    label: String,
    model: AnnealModel,
    bath: BathSpec,
    cutoff_ghz: f64,
    t_mk: f64,
}

struct Verdict {
    report: TheoremReport,
    position: f64,
    interior: bool,
}

impl Verdict {
    fn flagged(&self) -> bool {
        // The conditions are sufficient only: an interior optimum without them is no conflict.
        self.report.predicts_interior() && !self.interior
    }
}

fn random_instances(cfg: &ExperimentConfig, count: usize) -> Result<Vec<Instance>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bath_cfg = cfg.bath.as_ref().ok_or_else(|| CliError::Config("missing section [bath]".into()))?;
    let e0 = cfg.schedule()?.gap()?.scale;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let mu = rng.gen_range(0.4..0.6);
        let gap = GapSchedule::new(e0, rng.gen_range(1e-3..1e-2), mu, rng.gen_range(0.3..0.6))?;
        let angle = AngularSchedule::new(mu, rng.gen_range(0.005..0.02), BoundaryAngle::HalfPi)?;
        let cutoff_ghz = rng.gen_range(0.3..1.0);
        let t_mk = rng.gen_range(12.0..20.0);
        let coupling = rng.gen_range(5e-5..5e-4);
        let bath = BathSpec::from_lab_units(coupling, t_mk, cutoff_ghz)?.with_convention(bath_cfg.spec()?.convention);
        out.push(Instance {
            label: format!("random-{k}"),
            model: AnnealModel::gaussian(gap, angle),
            bath,
            cutoff_ghz,
            t_mk,
        });
    }
    Ok(out)
}

pub fn theorem_check(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let th = cfg
        .theorem
        .as_ref()
        .ok_or_else(|| CliError::Config("missing section [theorem]".into()))?;
    require_gaussian(cfg, "theorem-check")?;
    if !(th.s_d > 0.0) {
        return Err(CliError::Config(format!("[theorem] s_d must be positive, got {}", th.s_d)));
    }
    if !(th.c > 1.0) {
        return Err(CliError::Config(format!("[theorem] c must exceed 1, got {}", th.c)));
    }
    if th.grid_points < 3 {
        return Err(CliError::Config("[theorem] grid_points must be at least 3".into()));
    }
    let solve = cfg.solve()?;
    let t_f = solve.t_f()?;
    let solver = solve.solver_config(cfg.bath.as_ref())?;
    let bath_cfg = cfg.bath.as_ref().ok_or_else(|| CliError::Config("missing section [bath]".into()))?;
    let ModelPlan::Ready(base) = cfg.model_plan()? else {
        unreachable!("gaussian models need no projection")
    };
    let cutoffs = th.cutoffs_ghz.clone().unwrap_or_else(|| vec![bath_cfg.omega_c_ghz]);
    if cutoffs.is_empty() {
        return Err(CliError::Config("[theorem] cutoffs_GHz is empty".into()));
    }
    let mut instances = Vec::new();
    for &wc in &cutoffs {
        instances.push(Instance {
            label: format!("config@{wc}GHz"),
            model: base.clone(),
            bath: bath_cfg.spec_with(bath_cfg.t_mk, wc)?,
            cutoff_ghz: wc,
            t_mk: bath_cfg.t_mk,
        });
    }
    instances.extend(random_instances(cfg, th.random_instances)?);

    let verdicts: Vec<Result<Verdict, tls_anneal::Error>> = instances
        .par_iter()
        .map(|inst| {
            let pm = population_model(&inst.model, inst.bath, t_f, &solver)?;
            let report = check_assumptions(&pm, th.s_d, th.c)?;
            let grid: Vec<f64> = (0..th.grid_points)
                .map(|i| pm.start + (1.0 - pm.start) * i as f64 / (th.grid_points - 1) as f64)
                .collect();
            let opt = optimize_pause(&pm, th.s_d, &grid)?;
            Ok(Verdict {
                report,
                position: opt.position,
                interior: opt.interior,
            })
        })
        .collect();

    let mut file = CsvOut::create(
        out,
        "theorem.csv",
        cfg,
        &[],
        &[
            "instance",
            "omega_c_GHz",
            "T_mK",
            "decreasing_rate",
            "strong_after_gap",
            "weak_at_end",
            "subthermal",
            "x",
            "S_star",
            "lambda_star",
            "epsilon",
            "predicted_interior",
            "observed_s_p",
            "observed_interior",
            "flagged",
        ],
    )?;
    let mut report = String::new();
    let (mut flagged, mut failed) = (0, 0);
    for (inst, v) in instances.iter().zip(&verdicts) {
        let v = match v {
            Ok(v) => v,
            Err(e) => {
                failed += 1;
                warn!("{}: {e}", inst.label);
                report += &format!("{}: error: {e}\n", inst.label);
                file.row([inst.label.clone(), num(inst.cutoff_ghz), num(inst.t_mk)])?;
                continue;
            }
        };
        let r = &v.report;
        flagged += usize::from(v.flagged());
        let mark = |pass: bool| if pass { "pass" } else { "FAIL" };
        report += &format!(
            "{}: omega_c = {} GHz, T = {} mK\n  decreasing rate {} ({:.3e})\n  strong after gap {} ({:.3e})\n  weak at end {} ({:.3e})\n  subthermal {} ({:.3e})\n  x = {:.4}, S* = {:.4}, lambda* = {:.4}, eps = {}\n  predicted interior: {}, observed optimum s_p = {:.4} (interior: {}){}\n",
            inst.label,
            inst.cutoff_ghz,
            inst.t_mk,
            mark(r.decreasing_rate.pass),
            r.decreasing_rate.margin,
            mark(r.strong_after_gap.pass),
            r.strong_after_gap.margin,
            mark(r.weak_at_end.pass),
            r.weak_at_end.margin,
            mark(r.subthermal.pass),
            r.subthermal.margin,
            r.x,
            r.s_star,
            r.lambda_star,
            r.epsilon.map_or("singular".into(), |e| format!("{e:.4e}")),
            r.predicts_interior(),
            v.position,
            v.interior,
            if v.flagged() { "  <-- DISAGREEMENT" } else { "" },
        );
        file.row([
            inst.label.clone(),
            num(inst.cutoff_ghz),
            num(inst.t_mk),
            num(r.decreasing_rate.margin),
            num(r.strong_after_gap.margin),
            num(r.weak_at_end.margin),
            num(r.subthermal.margin),
            num(r.x),
            num(r.s_star),
            num(r.lambda_star),
            opt(r.epsilon),
            r.predicts_interior().to_string(),
            num(v.position),
            v.interior.to_string(),
            v.flagged().to_string(),
        ])?;
    }
    file.finish()?;
    print!("{report}");
    std::fs::write(out.join("theorem_report.txt"), &report)?;
    if flagged > 0 {
        return Err(CliError::Disagreement(flagged));
    }
    if failed > 0 {
        return Err(CliError::PartialSweep {
            failed,
            total: instances.len(),
        });
    }
    Ok(())
}

pub fn epsilon_map(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let sec = cfg
        .epsilon
        .as_ref()
        .ok_or_else(|| CliError::Config("missing section [epsilon]".into()))?;
    let bath_cfg = cfg.bath.as_ref().ok_or_else(|| CliError::Config("missing section [bath]".into()))?;
    let cutoffs = sec.omega_c_ghz.values();
    let temps = sec.t_mk.values();
    if cutoffs.is_empty() || temps.is_empty() {
        return Err(CliError::Config("[epsilon] grids must be non-empty".into()));
    }
    let mut cells = Vec::with_capacity(cutoffs.len() * temps.len());
    for &wc in &cutoffs {
        for &t in &temps {
            cells.push((wc, t, bath_cfg.spec_with(t, wc)?));
        }
    }
    let model = cfg.model_plan()?.build()?;

    // Epsilon depends on the bath and on the end of the schedule only.
    let values: Vec<Option<f64>> = cells
        .par_iter()
        .map(|&(_, _, bath)| {
            PopulationModel::new(model.clone(), bath, 1.0, 0.5, 0.0)
                .and_then(|pm| epsilon(&pm))
                .ok()
                .filter(|e| *e > 0.0)
        })
        .collect();
    let mut file = CsvOut::create(out, "epsilon.csv", cfg, &[], &["omega_c_GHz", "T_mK", "log10_epsilon"])?;
    let mut peak: Option<(f64, f64, f64)> = None;
    for (&(wc, t, _), e) in cells.iter().zip(&values) {
        file.row([num(wc), num(t), opt(e.map(f64::log10))])?;
        if let Some(e) = *e {
            if peak.map_or(true, |p| e > p.2) {
                peak = Some((wc, t, e));
            }
        }
    }
    file.finish()?;
    let missing = values.iter().filter(|v| v.is_none()).count();
    let line = rad_per_ns_to_ghz(model.omega(1.0));
    match peak {
        Some((wc, t, e)) => println!(
            "max epsilon {e:.4e} at omega_c = {wc} GHz, T = {t} mK; final gap {line:.4} GHz; {missing} singular cells"
        ),
        None => println!("all {missing} cells singular"),
    }
    Ok(())
}

pub fn project(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    if !matches!(cfg.model.kind, ModelKind::Pspin | ModelKind::SingleQubitLinear) {
        return Err(CliError::Config(
            "project needs [model] kind = \"pspin\" or \"single_qubit_linear\"".into(),
        ));
    }
    let plan = cfg.model_plan()?;
    let model = plan.build()?;
    let grid: Vec<f64> = match &model.gap {
        GapProfile::Tabulated(sp) => sp.knots().to_vec(),
        GapProfile::Gaussian(_) => (0..=400).map(|i| i as f64 / 400.0).collect(),
    };
    let mut columns = vec!["s".to_string(), "Omega".into(), "dtheta".into(), "theta".into()];
    for j in 0..model.couplings.len() {
        for part in ["ground", "mixed", "excited"] {
            columns.push(format!("S{j}_{part}"));
        }
    }
    let names: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut file = CsvOut::create(
        out,
        "model.csv",
        cfg,
        &["units: Omega in rad/ns, dtheta and theta in radians per unit s".into()],
        &names,
    )?;
    let mut peak = (0.0, 0.0f64);
    for &s in &grid {
        let mut row = vec![num(s), num(model.omega(s)), num(model.dtheta(s)), num(model.theta(s))];
        for op in model.coupling_operators(s) {
            row.extend([num(op[(0, 0)].re), num(op[(0, 1)].re), num(op[(1, 1)].re)]);
        }
        file.row(row)?;
        if model.dtheta(s).abs() > peak.1 {
            peak = (s, model.dtheta(s).abs());
        }
    }
    let path = file.finish()?;
    println!(
        "{} points, angular-progression peak at s = {:.4}, total angle {:.6}, written to {}",
        grid.len(),
        peak.0,
        model.theta(1.0),
        path.display()
    );
    Ok(())
}
