use std::path::Path;

use blowup_core::wave::SourceMode;
use blowup_harness::config::ExperimentConfig;
use blowup_harness::fit::{TheoryForm, EXPONENTIAL_R2};
use blowup_harness::sweep::run_sweep;

#[test]
fn velocity_source_in_three_dimensions_has_exponential_lifespan() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/n3_velocity.cfg");
    let config = ExperimentConfig::load(&path, &[]).unwrap();
    let result = run_sweep(&config);
    assert!(result.runs_pass(SourceMode::Nonlinear));
    assert!(result.monotone);
    let fit = result.fit.clone().unwrap().unwrap();
    assert_eq!(fit.theory, TheoryForm::Exponential);
    assert!(fit.r_squared >= EXPONENTIAL_R2, "r2 {}", fit.r_squared);
    assert!(fit.slope > 0.0 && fit.upper_bound_consistent);
    assert!(result.pass(SourceMode::Nonlinear));
    // the closed-form Riccati comparison time bounds each measured lifespan
    for e in &result.entries {
        let r = e.outcome.as_ref().unwrap();
        assert!(r.lifespan().unwrap() <= r.ode_bound.unwrap(), "eps {}", e.epsilon);
    }
}
