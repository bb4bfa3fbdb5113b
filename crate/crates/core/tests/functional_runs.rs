use blowup_core::domain::{
    bump, CoefficientField, CoefficientProfile, DomainSpec, ProblemSpec, RadialGrid, SourceKind,
};
use blowup_core::functionals::{
    build_context, compute_f0, compute_f1, simpson, simulate, verify_inequality, Check, CheckMode, FunctionalError,
    WeightPair,
};
use blowup_core::wave::{DataProfile, InitialData, Observer, SimConfig, SourceMode, WaveState};
use proptest::prelude::*;

fn config(n: usize, kind: SourceKind, eps: f64, spacing: f64, t_max: f64) -> SimConfig<f64> {
    let pulse = DataProfile::Bump { amplitude: 1.0, center: 1.5, width: 0.5 };
    let (f, g) = match kind {
        SourceKind::DisplacementPower => (pulse, DataProfile::Zero),
        SourceKind::VelocityPower => (DataProfile::Zero, pulse),
    };
    SimConfig {
        problem: ProblemSpec::new(n, 2.0, kind).unwrap(),
        domain: DomainSpec::new(n, 1.0, 2.0).unwrap(),
        field: CoefficientField::identity(),
        data: InitialData { f, g, epsilon: eps },
        spacing,
        cfl_factor: 0.5,
        u_max: 1e8,
        t_max,
        sample_interval: 0.1,
        lifespan_tol: 0.02,
        mode: SourceMode::Nonlinear,
    }
}

fn bump_state(g: &RadialGrid<f64>, t: f64) -> WaveState<f64> {
    let u: Vec<f64> = g.nodes.iter().map(|&r| bump((r - 1.6) / 0.5)).collect();
    let v = u.iter().map(|x| 0.5 * x).collect();
    WaveState { t, u, v }
}

#[test]
fn trapezoid_and_simpson_agree_at_production_spacing() {
    let profile = CoefficientProfile::Bump { amplitude: 0.5, center: 1.5, width: 0.4 };
    let field = CoefficientField::with_tight_ellipticity(profile).unwrap();
    for h in [1e-2, 5e-3] {
        let g = RadialGrid::uniform(3, 1.0, h, (20.0 / h) as usize);
        let pair = WeightPair::solve(&field, &g).unwrap();
        let s = bump_state(&g, 0.7);
        let phi0 = pair.phi0.as_ref().unwrap();
        let f0 = compute_f0(&s, phi0).unwrap();
        let prod: Vec<f64> = s.u.iter().zip(&phi0.values).map(|(a, b)| a * b).collect();
        let oracle = simpson(&g, &prod);
        assert!(((f0 - oracle) / oracle).abs() <= 1e-6, "F0 at h={h}");

        let f1 = compute_f1(&s, &pair).unwrap();
        let prod: Vec<f64> = (0..g.len()).map(|i| s.u[i] * pair.psi1(i, 0.7)).collect();
        let oracle = simpson(&g, &prod);
        assert!(((f1 - oracle) / oracle).abs() <= 1e-6, "F1 at h={h}");
    }
}

#[test]
fn f0_against_high_order_oracle() {
    let field =
        CoefficientField::with_tight_ellipticity(CoefficientProfile::Bump { amplitude: -0.4, center: 1.4, width: 0.3 })
            .unwrap();
    let g = RadialGrid::uniform(3, 1.0, 1e-3, 9000);
    let phi0 = WeightPair::solve(&field, &g).unwrap().phi0.unwrap();
    let s = bump_state(&g, 0.0);
    let f0 = compute_f0(&s, &phi0).unwrap();
    let prod: Vec<f64> = s.u.iter().zip(&phi0.values).map(|(a, b)| a * b).collect();
    assert!((f0 - simpson(&g, &prod)).abs() <= 1e-8);
}

#[test]
fn velocity_run_keeps_g0_nonnegative() {
    let cfg = config(1, SourceKind::VelocityPower, 0.5, 1e-2, 40.0);
    let sim = simulate(&cfg).unwrap();
    let lifespan = sim.trace.blowup.expect("blows up");
    assert!(lifespan.converged);
    assert!(sim.trace.g0.iter().all(|&g| g >= -1e-3), "G0 went negative");
    let ctx = build_context(&sim.trace, &sim.weights, &cfg.problem, &cfg.domain, &cfg.data, 1e-3).unwrap();
    for check in Check::for_source(SourceKind::VelocityPower) {
        let report = verify_inequality(&sim.trace, *check, &ctx).unwrap();
        assert!(report.pass, "{} min margin {}", report.name, report.min_margin);
    }
    // trace arrays are aligned and time increases
    let tr = &sim.trace;
    assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    for len in [tr.f1.len(), tr.g0.len(), tr.fcum.len(), tr.sup_u.len(), tr.sup_v.len()] {
        assert_eq!(len, tr.len());
    }
}

#[test]
fn linear_run_reports_source_off_identity() {
    let mut cfg = config(3, SourceKind::DisplacementPower, 0.5, 1e-2, 15.0);
    cfg.mode = SourceMode::Off;
    let sim = simulate(&cfg).unwrap();
    assert!(sim.trace.blowup.is_none());
    let ctx = build_context(&sim.trace, &sim.weights, &cfg.problem, &cfg.domain, &cfg.data, 1e-3).unwrap();
    let report = verify_inequality(&sim.trace, Check::Convexity, &ctx).unwrap();
    assert_eq!(report.mode, CheckMode::SourceOffIdentity);
    assert!(report.pass);
    assert!(report.margin_series.iter().all(|m| m.abs() < 1e-8));
    let identity = verify_inequality(&sim.trace, Check::F0Identity, &ctx).unwrap();
    assert!(identity.pass);
}

#[test]
fn displacement_run_passes_its_checks() {
    let cfg = config(3, SourceKind::DisplacementPower, 0.8, 1e-2, 60.0);
    let sim = simulate(&cfg).unwrap();
    assert!(sim.trace.blowup.as_ref().is_some_and(|l| l.converged));
    let ctx = build_context(&sim.trace, &sim.weights, &cfg.problem, &cfg.domain, &cfg.data, 1e-3).unwrap();
    for check in Check::for_source(SourceKind::DisplacementPower) {
        let report = verify_inequality(&sim.trace, *check, &ctx).unwrap();
        assert!(report.pass, "{} min margin {}", report.name, report.min_margin);
    }
}

#[test]
fn short_traces_are_rejected() {
    let cfg = config(1, SourceKind::VelocityPower, 0.5, 1e-2, 0.3);
    let sim = simulate(&cfg).unwrap();
    let ctx = build_context(&sim.trace, &sim.weights, &cfg.problem, &cfg.domain, &cfg.data, 1e-3).unwrap();
    assert_eq!(
        verify_inequality(&sim.trace, Check::MomentBound, &ctx).unwrap_err(),
        FunctionalError::InsufficientSamples(4)
    );
    let cfg = config(1, SourceKind::VelocityPower, 0.5, 1e-2, 1.0);
    let sim = simulate(&cfg).unwrap();
    let ctx = build_context(&sim.trace, &sim.weights, &cfg.problem, &cfg.domain, &cfg.data, 1e-3).unwrap();
    assert_eq!(verify_inequality(&sim.trace, Check::Convexity, &ctx).unwrap_err(), FunctionalError::MissingPhi0);
}

struct DirichletWatch {
    worst: f64,
}

impl Observer<f64> for DirichletWatch {
    fn on_step(&mut self, state: &WaveState<f64>, _active: usize) {
        self.worst = self.worst.max(state.u[0].abs());
    }
}

#[test]
fn obstacle_node_stays_pinned() {
    let cfg = config(3, SourceKind::DisplacementPower, 0.8, 1e-2, 40.0);
    let mut watch = DirichletWatch { worst: 0.0 };
    blowup_core::wave::run(&cfg, &mut watch).unwrap();
    assert_eq!(watch.worst, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn lifespan_nonincreasing_in_amplitude(eps in 0.35f64..1.0) {
        let run = |e: f64| simulate(&config(1, SourceKind::VelocityPower, e, 1e-2, 60.0)).unwrap().trace.blowup.unwrap().t_num;
        prop_assert!(run(eps * 1.25) <= run(eps));
    }
}
