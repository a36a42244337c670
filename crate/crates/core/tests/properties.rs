use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use tls_anneal::analytic::{
    analytic_population, check_assumptions, pause_derivative, post_pulse_population, DiabaticPulse, PopulationModel,
};
use tls_anneal::bath::BathSpec;
use tls_anneal::frames::{
    collective_operator, geometric_terms, project_tls, AnnealModel, GapProfile, HamiltonianFamily, PSpin,
    TrackingOptions,
};
use tls_anneal::interp::CubicSpline;
use tls_anneal::schedules::{AngularSchedule, BoundaryAngle, GapSchedule, PauseSpec};
use tls_anneal::solvers::{
    evolve, evolve_ame, evolve_closed, pre_pulse_population, success_probability, AmeMode, Environment, SolverConfig,
    SolverKind,
};

fn hard(boundary: BoundaryAngle) -> AnnealModel {
    AnnealModel::gaussian(
        GapSchedule::new(30.0, 1e-3, 0.5, 0.5).unwrap(),
        AngularSchedule::new(0.5, 0.01, boundary).unwrap(),
    )
}

fn quiet() -> SolverConfig {
    SolverConfig {
        samples: 21,
        ..SolverConfig::default()
    }
}

fn delta_cfg() -> SolverConfig {
    SolverConfig {
        ame_mode: AmeMode::DeltaPulse,
        samples: 2,
        ..SolverConfig::default()
    }
}

fn fig4_env() -> &'static Environment {
    static ENV: OnceLock<Environment> = OnceLock::new();
    ENV.get_or_init(|| {
        let bath = BathSpec::from_lab_units(1e-4, 16.0, 4.0).unwrap();
        Environment::prepare(bath, &hard(BoundaryAngle::HalfPi), 100.0, &SolverKind::ALL, &quiet()).unwrap()
    })
}

fn low_cutoff_model() -> &'static PopulationModel {
    static PM: OnceLock<PopulationModel> = OnceLock::new();
    PM.get_or_init(|| {
        let m = hard(BoundaryAngle::HalfPi);
        let bath = BathSpec::from_lab_units(1e-4, 16.0, 0.5).unwrap();
        let p0 = pre_pulse_population(&m, &Environment::new(bath), 100.0, &delta_cfg()).unwrap();
        let phi = DiabaticPulse::for_model(&m, 100.0).unwrap().phi;
        PopulationModel::new(m, bath, 100.0, post_pulse_population(p0, phi), 0.54).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn detailed_balance_and_positivity(
        w in 1e-3f64..50.0,
        coupling in 1e-6f64..1e-2,
        t_mk in 5.0f64..50.0,
        cutoff in 0.1f64..10.0,
    ) {
        let bath = BathSpec::from_lab_units(coupling, t_mk, cutoff).unwrap();
        let up = bath.gamma(-w) * (bath.beta * w).exp();
        prop_assert!(((up - bath.gamma(w)) / bath.gamma(w)).abs() < 1e-12);
        prop_assert!(bath.gamma(w) > 0.0);
    }

    #[test]
    fn full_turn_angle_is_twice_the_quarter_turn(mu in 0.2f64..0.8, width in 0.005f64..0.1, s in 0.0f64..1.0) {
        let half = AngularSchedule::new(mu, width, BoundaryAngle::HalfPi).unwrap();
        let full = AngularSchedule::new(mu, width, BoundaryAngle::Pi).unwrap();
        prop_assert!((full.annealing_angle(s) - 2.0 * half.annealing_angle(s)).abs() < 1e-14);
    }

    #[test]
    fn first_condition_implies_q_below_one(
        mu in 0.4f64..0.6,
        width in 0.3f64..0.6,
        delta in 1e-3f64..1e-2,
        alpha in 0.005f64..0.02,
        cutoff in 0.3f64..4.0,
        t_mk in 12.0f64..20.0,
    ) {
        let m = AnnealModel::gaussian(
            GapSchedule::new(30.0, delta, mu, width).unwrap(),
            AngularSchedule::new(mu, alpha, BoundaryAngle::HalfPi).unwrap(),
        );
        let bath = BathSpec::from_lab_units(1e-4, t_mk, cutoff).unwrap();
        let pm = PopulationModel::new(m, bath, 100.0, 0.5, mu + 4.0 * alpha).unwrap();
        let r = check_assumptions(&pm, 4.0, 2.0).unwrap();
        if r.decreasing_rate.pass && r.gap_rising {
            prop_assert!(r.q < 1.0, "q = {}", r.q);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn open_evolutions_preserve_trace(sp in 0.05f64..1.0, sd in 0.0f64..2.0, k in 0usize..4) {
        let kind = SolverKind::ALL[k];
        let t = evolve(kind, &hard(BoundaryAngle::HalfPi), PauseSpec::new(sp, sd).unwrap(), Some(fig4_env()), 100.0, &quiet()).unwrap();
        for st in &t.states {
            prop_assert!((st.trace() - 1.0).abs() < 1e-8, "{:?} trace {}", kind, st.trace());
            if kind == SolverKind::Ame {
                let p = st.ground_population();
                prop_assert!((-1e-10..=1.0 + 1e-10).contains(&p));
            }
        }
    }

    #[test]
    fn analytic_population_matches_delta_pulse_ame(sp in 0.54f64..1.0, sd in 0.0f64..8.0) {
        let pm = low_cutoff_model();
        let p = PauseSpec::new(sp, sd).unwrap();
        let a = analytic_population(pm, &p).unwrap();
        let n = success_probability(&evolve_ame(&pm.model, p, &Environment::new(pm.bath), 100.0, &delta_cfg()).unwrap());
        prop_assert!((a - n).abs() < 1e-3, "{a} vs {n}");
    }

    #[test]
    fn pause_derivative_matches_central_difference(sp in 0.56f64..0.98, sd in 0.5f64..8.0) {
        let pm = low_cutoff_model();
        let h = 1e-4;
        let f = |x: f64| analytic_population(pm, &PauseSpec::new(x, sd).unwrap()).unwrap();
        let fd = (f(sp + h) - f(sp - h)) / (2.0 * h);
        let exact = pause_derivative(pm, sp, sd).unwrap();
        prop_assert!((exact - fd).abs() <= 1e-3 * fd.abs().max(1e-6), "{exact} vs {fd}");
    }
}

#[test]
fn longer_anneals_end_closer_to_the_ground_state() {
    let m = hard(BoundaryAngle::HalfPi);
    let bath = BathSpec::from_lab_units(1e-4, 16.0, 4.0).unwrap();
    let mut last = 0.0;
    for t_f in [25.0, 50.0, 100.0, 200.0] {
        let env = Environment::prepare(bath, &m, t_f, &[SolverKind::Ame], &quiet()).unwrap();
        let p = success_probability(&evolve_ame(&m, PauseSpec::none(), &env, t_f, &quiet()).unwrap());
        assert!(p > last, "t_f = {t_f}: {p} after {last}");
        last = p;
    }
}

#[test]
fn geometric_terms_are_antisymmetric() {
    let family = PSpin::new(5, 3).unwrap();
    let grid: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
    let traj = geometric_terms(&family, &grid, &TrackingOptions::default()).unwrap();
    for c in &traj.coupling {
        assert!((c + c.transpose()).amax() < 1e-8);
    }
}

/// Ground-state population after evolving the full symmetric-subspace Schrodinger equation
/// with exact exponentials of the midpoint Hamiltonian.
fn full_space_success(family: &PSpin, scale: f64, t_f: f64, steps: usize) -> f64 {
    let ground = |s: f64| -> DVector<Complex64> {
        let e = family.hamiltonian(s).symmetric_eigen();
        let k = e.eigenvalues.imin();
        e.eigenvectors.column(k).map(|x| Complex64::new(x, 0.0))
    };
    let mut psi = ground(0.0);
    let ds = 1.0 / steps as f64;
    for k in 0..steps {
        let e = family.hamiltonian((k as f64 + 0.5) * ds).symmetric_eigen();
        let v = e.eigenvectors.map(|x| Complex64::new(x, 0.0));
        let phases = e.eigenvalues.map(|w| Complex64::from_polar(1.0, -w * scale * t_f * ds));
        let coeffs = v.adjoint() * &psi;
        psi = &v * coeffs.component_mul(&phases);
    }
    ground(1.0).dotc(&psi).norm_sqr()
}

#[test]
fn projected_pspin_reproduces_full_space_evolution() {
    let n = 20;
    let family = PSpin::new(n, 19).unwrap();
    let grid: Vec<f64> = (0..=400).map(|i| i as f64 / 400.0).collect();
    let opts = TrackingOptions {
        tracked_levels: Some(3),
        ..TrackingOptions::default()
    };
    let traj = geometric_terms(&family, &grid, &opts).unwrap();
    let ops = [collective_operator(n, 'x').unwrap(), collective_operator(n, 'z').unwrap()];
    let mut model = project_tls(&traj, &ops, 0.01).unwrap();
    // Energies in units of 1 GHz.
    let scale = 2.0 * PI;
    if let GapProfile::Tabulated(sp) = &model.gap {
        let values = sp.values().iter().map(|v| v * scale).collect();
        model.gap = GapProfile::Tabulated(CubicSpline::new(sp.knots().to_vec(), values).unwrap());
    }
    for t_f in [20.0, 200.0, 2000.0] {
        let reduced = success_probability(&evolve_closed(&model, PauseSpec::none(), t_f, &quiet()).unwrap());
        let full = full_space_success(&family, scale, t_f, 20_000);
        assert!((reduced - full).abs() < 1e-2, "t_f = {t_f}: reduced {reduced} vs full {full}");
    }
}
