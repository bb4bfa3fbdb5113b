//! Amplitude sweeps: one traced run per epsilon, the inequality checks on each
//! trace, and the lifespan scaling fit.

use blowup_core::domain::SourceKind;
use blowup_core::functionals::{
    build_context, simulate, verify_inequality, Check, FunctionalError, InequalityContext, InequalityReport, Simulation,
};
use blowup_core::ode::{riccati_closed_form, theorem_exponent, RiccatiProblem};
use blowup_core::wave::SourceMode;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::fit::{fit_scaling, FitError, ScalingFit, TheoryForm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error("no blowup for eps = {epsilon} up to t = {t_max}; raise numerics.t_max or numerics.max_doublings")]
    NoBlowupObserved { epsilon: f64, t_max: f64 },
    #[error(transparent)]
    Functional(#[from] FunctionalError),
}

/// Checks that apply to a run.
pub fn applicable_checks(kind: SourceKind, mode: SourceMode, has_phi0: bool) -> Vec<Check> {
    let needs_phi0 = |c: &Check| matches!(c, Check::Convexity | Check::F0Growth | Check::F0Identity);
    match mode {
        SourceMode::Off => [Check::F1LowerBound, Check::Convexity, Check::F0Identity]
            .into_iter()
            .filter(|c| has_phi0 || !needs_phi0(c))
            .collect(),
        SourceMode::Nonlinear => {
            Check::for_source(kind).iter().copied().filter(|c| has_phi0 || !needs_phi0(c)).collect()
        }
    }
}

/// Outcome of one check: a report, or the reason none could be produced.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub check: Check,
    pub result: Result<InequalityReport<f64>, FunctionalError>,
}

impl CheckOutcome {
    pub fn pass(&self) -> bool {
        self.result.as_ref().is_ok_and(|r| r.pass)
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub epsilon: f64,
    pub t_max_used: f64,
    pub sim: Simulation<f64>,
    pub context: InequalityContext<f64>,
    pub checks: Vec<CheckOutcome>,
    pub g0_min: f64,
    /// Closed-form blowup time of the Riccati comparison problem (velocity source).
    pub ode_bound: Option<f64>,
}

impl RunRecord {
    pub fn lifespan(&self) -> Option<f64> {
        self.sim.trace.blowup.map(|b| b.t_num)
    }

    pub fn converged(&self) -> bool {
        self.sim.trace.blowup.is_some_and(|b| b.converged)
    }

    pub fn checks_pass(&self) -> bool {
        self.checks.iter().all(CheckOutcome::pass)
    }
}

/// Runs the checks on a finished simulation.
pub fn evaluate(
    config: &ExperimentConfig,
    epsilon: f64,
    sim: &Simulation<f64>,
) -> Result<(InequalityContext<f64>, Vec<CheckOutcome>), FunctionalError> {
    let data = config.data(epsilon);
    let context =
        build_context(&sim.trace, &sim.weights, &config.problem, &config.domain, &data, config.check_tolerance)?;
    let checks = applicable_checks(config.problem.source_kind, config.numerics.mode, sim.weights.phi0.is_some())
        .into_iter()
        .map(|check| CheckOutcome { check, result: verify_inequality(&sim.trace, check, &context) })
        .collect();
    Ok((context, checks))
}

fn ode_bound(config: &ExperimentConfig, ctx: &InequalityContext<f64>) -> Option<f64> {
    if config.problem.source_kind != SourceKind::VelocityPower || config.numerics.mode == SourceMode::Off {
        return None;
    }
    let prob = RiccatiProblem::new(ctx.c9, ctx.m_data, ctx.epsilon, ctx.n, ctx.p, ctx.support_radius).ok()?;
    Some(riccati_closed_form(&prob).value)
}

/// Simulates one amplitude, doubling the horizon until blowup is seen.
pub fn run_single(config: &ExperimentConfig, epsilon: f64) -> Result<RunRecord, RunError> {
    let mut t_max = config.numerics.t_max;
    let mut attempt = 0;
    let sim = loop {
        let sim = simulate(&config.sim_config(epsilon, t_max))?;
        if sim.trace.blowup.is_some() || config.numerics.mode == SourceMode::Off {
            break sim;
        }
        if attempt >= config.numerics.max_doublings {
            return Err(RunError::NoBlowupObserved { epsilon, t_max });
        }
        attempt += 1;
        t_max *= 2.0;
    };
    let (context, checks) = evaluate(config, epsilon, &sim)?;
    let g0_min = sim.trace.g0.iter().copied().fold(f64::INFINITY, f64::min);
    let ode_bound = ode_bound(config, &context);
    Ok(RunRecord { epsilon, t_max_used: t_max, sim, context, checks, g0_min, ode_bound })
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub outcome: Result<RunRecord, RunError>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Sorted by decreasing amplitude.
    pub entries: Vec<SweepEntry>,
    /// Lifespans strictly increase as the amplitude decreases.
    pub monotone: bool,
    pub theory: Option<TheoryForm>,
    pub fit: Option<Result<ScalingFit, FitError>>,
}

impl SweepResult {
    /// `(eps, T_num)` for runs that blew up with a converged lifespan.
    pub fn converged_points(&self) -> Vec<(f64, f64)> {
        self.entries
            .iter()
            .filter_map(|e| e.outcome.as_ref().ok())
            .filter(|r| r.converged())
            .filter_map(|r| r.lifespan().map(|t| (r.epsilon, t)))
            .collect()
    }

    /// Every run finished, converged where blowup is expected, and passed its checks.
    pub fn runs_pass(&self, mode: SourceMode) -> bool {
        self.entries.iter().all(|e| match &e.outcome {
            Ok(r) => r.checks_pass() && (mode == SourceMode::Off || r.converged()),
            Err(_) => false,
        })
    }

    /// Runs pass, lifespans are monotone, and no lifespan exceeds the theoretical envelope.
    pub fn pass(&self, mode: SourceMode) -> bool {
        if !self.runs_pass(mode) {
            return false;
        }
        if mode == SourceMode::Off {
            return true;
        }
        self.monotone && matches!(&self.fit, Some(Ok(f)) if f.upper_bound_consistent)
    }
}

/// Strictly increasing lifespans along decreasing amplitudes.
pub fn is_monotone(points: &[(f64, f64)]) -> bool {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    sorted.windows(2).all(|w| w[1].1 > w[0].1)
}

pub fn run_sweep(config: &ExperimentConfig) -> SweepResult {
    let mut entries: Vec<SweepEntry> = config
        .epsilons
        .par_iter()
        .map(|&epsilon| SweepEntry { epsilon, outcome: run_single(config, epsilon) })
        .collect();
    entries.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let mut result = SweepResult { entries, monotone: true, theory: None, fit: None };
    if config.numerics.mode == SourceMode::Off {
        return result;
    }
    let points = result.converged_points();
    result.monotone = points.len() == result.entries.len() && is_monotone(&points);
    if let Ok(exponent) = theorem_exponent(&config.problem) {
        let theory = TheoryForm::from(exponent);
        result.theory = Some(theory);
        result.fit = Some(fit_scaling(&points, theory, config.problem.p, config.fit_tolerance));
    }
    result
}
