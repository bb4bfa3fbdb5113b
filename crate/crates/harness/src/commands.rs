//! Command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use blowup_core::domain::{CoefficientProfile, RadialGrid};
use blowup_core::elliptic::{check_hopf_distance, identity, phi1_growth_fit, solve_phi0, solve_phi1};
use blowup_core::functionals::{
    geometric_grid, verify_estimate_lemma, EstimateLemma, FunctionalError, InequalityReport, Simulation, WeightPair,
};
use blowup_core::ode::{
    integrate_riccati, integrate_sideris, rescale_sideris, riccati_closed_form, OdeProblem, RiccatiProblem,
};
use blowup_core::real::linear_fit;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, RawConfig};
use crate::fit::{fit_scaling, ScalingFit, TheoryForm};
use crate::output::{
    self, csv_string, fit_json, header_json, lifespan_from_json, parse_trace_csv, read_file, to_pretty, write_file,
    OutputError,
};
use crate::svg::lifespan_plot;
use crate::sweep::{evaluate, run_single, run_sweep, SweepEntry, SweepResult};

#[derive(Debug, Parser)]
#[command(name = "blowup-lab", version, about = "Blowup experiments for semilinear wave equations in exterior domains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment config, or a manifest written by an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write an SVG lifespan plot.
    #[arg(long)]
    pub plot: bool,
    /// Grid spacing (overrides `numerics.spacing`).
    #[arg(long)]
    pub spacing: Option<f64>,
    /// `key=value` config override; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the elliptic weights and compare with closed forms.
    Elliptic(Common),
    /// Simulate the first amplitude of the config and record its trace.
    Simulate(Common),
    /// Simulate every amplitude, check each trace and fit the lifespans.
    Sweep(Common),
    /// Re-check the traces of a manifest and the integral estimates.
    Verify(Common),
    /// Compare the blowup ODE integrators with closed forms and oracles.
    VerifyOde(Common),
    /// Refit the lifespans recorded in a manifest.
    Fit(Common),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 1,
            _ => 2,
        }
    }
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    match run(cli.command) {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_FAIL,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a command; `Ok(false)` means a check failed.
pub fn run(command: Command) -> Result<bool, CliError> {
    match command {
        Command::Elliptic(c) => elliptic(&c),
        Command::Simulate(c) => simulate(&c),
        Command::Sweep(c) => sweep(&c),
        Command::Verify(c) => verify(&c),
        Command::VerifyOde(c) => verify_ode(&c),
        Command::Fit(c) => fit(&c),
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let path = common.config.as_ref().ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let mut raw = RawConfig::load(path)?;
    for o in &common.overrides {
        raw.apply_override(o)?;
    }
    if let Some(h) = common.spacing {
        raw.set("numerics.spacing", &h.to_string())?;
    }
    if common.plot {
        raw.set("output.plot", "true")?;
    }
    Ok(ExperimentConfig::from_raw(raw)?)
}

fn out_dir(common: &Common, config: Option<&ExperimentConfig>) -> PathBuf {
    common.out.clone().or_else(|| config.and_then(|c| c.out_dir.clone())).unwrap_or_else(|| PathBuf::from("out"))
}

fn status(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

fn elliptic(common: &Common) -> Result<bool, CliError> {
    let config = load(common)?;
    let dir = out_dir(common, Some(&config));
    let n = config.problem.n;
    let (r0, h) = (config.domain.r0, config.numerics.spacing);
    let m = ((config.elliptic_r_outer - r0) / h).round() as usize;
    if m < 4 {
        return Err(ConfigError::Invalid { key: "elliptic.r_outer".into(), message: "too close to r0".into() }.into());
    }
    let grid = RadialGrid::uniform(n, r0, h, m);
    let numerical = |e: &dyn std::fmt::Display| CliError::Numerical(e.to_string());
    let phi1 = solve_phi1(&config.field, &grid).map_err(|e| numerical(&e))?;
    let phi0 = if n >= 3 { Some(solve_phi0(&config.field, &grid).map_err(|e| numerical(&e))?) } else { None };
    let exact = config.field.profile == CoefficientProfile::Identity;

    let mut rows = Vec::with_capacity(grid.len());
    let (mut err0, mut err1) = (0.0f64, 0.0f64);
    for (i, &r) in grid.nodes.iter().enumerate() {
        let p0 = phi0.as_ref().map(|w| w.values[i]);
        let o0 = (exact && n >= 3).then(|| identity::phi0(n, r0, r));
        let o1s = if exact { identity::phi1_scaled(n, r0, r) } else { None };
        let e0 = p0.zip(o0).map(|(a, b)| (a - b).abs());
        // relative error of the scaled values avoids the overflow of e^r
        let e1 = o1s.filter(|_| i > 0).map(|b| ((phi1.scaled[i] - b) / b).abs());
        err0 = err0.max(e0.unwrap_or(0.0));
        err1 = err1.max(e1.unwrap_or(0.0));
        let s = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        rows.push(vec![
            r.to_string(),
            s(p0),
            phi1.value(i).to_string(),
            s(o0),
            s(o1s.map(|b| b * r.exp())),
            s(e0),
            s(e1),
        ]);
    }
    write_file(
        &dir.join("elliptic.csv"),
        &csv_string(&["r", "phi0", "phi1", "phi0_oracle", "phi1_oracle", "phi0_error", "phi1_error"], rows),
    )?;

    let last = grid.len() - 1;
    let mut checks: Vec<(String, bool, f64)> = Vec::new();
    checks.push(("phi1_positive".into(), phi1.scaled[1..].iter().all(|&v| v > 0.0), phi1.residual));
    let growth = phi1_growth_fit(&phi1, &config.domain);
    checks.push(("phi1_growth".into(), growth.pass, growth.slope_fit));
    if let Some(w) = &phi0 {
        let inside = w.values[1..last].iter().all(|&v| v > 0.0 && v < 1.0);
        checks.push(("phi0_bounds".into(), inside, w.residual));
        checks.push(("phi0_monotone".into(), w.values.windows(2).all(|p| p[1] >= p[0]), 0.0));
        let hopf = check_hopf_distance(w, &config.domain).map_err(|e| numerical(&e))?;
        checks.push(("hopf".into(), hopf.pass, hopf.constant));
    }
    let pass = checks.iter().all(|c| c.1);
    for (name, ok, value) in &checks {
        println!("{:<14} {} ({value:e})", name, status(*ok));
    }
    if exact {
        match phi0 {
            Some(_) => println!("max error: phi0 {err0:e}, phi1 (relative) {err1:e}"),
            None => println!("max error: phi1 (relative) {err1:e}"),
        }
    }
    let mut m = header_json("elliptic", &config);
    m.insert(
        "checks".into(),
        Value::Array(checks.iter().map(|(n, p, v)| json!({"name": n, "pass": p, "value": v})).collect()),
    );
    m.insert(
        "oracle_error".into(),
        if exact { json!({"phi0": phi0.as_ref().map(|_| err0), "phi1_relative": err1}) } else { Value::Null },
    );
    m.insert("pass".into(), json!(pass));
    write_file(&dir.join("manifest.json"), &to_pretty(&Value::Object(m)))?;
    Ok(pass)
}

fn print_entry(entry: &SweepEntry) {
    match &entry.outcome {
        Ok(r) => {
            let t = r.lifespan().map(|t| format!("{t:.6}")).unwrap_or_else(|| "none".into());
            println!("eps {:<8} T_num {t} converged {}", entry.epsilon, r.converged());
            for c in &r.checks {
                match &c.result {
                    Ok(rep) => println!("  {:<16} {} (min margin {:e})", rep.name, status(rep.pass), rep.min_margin),
                    Err(e) => println!("  {:<16} FAIL ({e})", c.check.name()),
                }
            }
        }
        Err(e) => println!("eps {:<8} FAIL ({e})", entry.epsilon),
    }
}

fn simulate(common: &Common) -> Result<bool, CliError> {
    let config = load(common)?;
    let dir = out_dir(common, Some(&config));
    let epsilon = config.epsilons[0];
    let entry = SweepEntry { epsilon, outcome: run_single(&config, epsilon) };
    print_entry(&entry);
    let result = SweepResult { entries: vec![entry], monotone: true, theory: None, fit: None };
    output::write_sweep(&dir, "simulate", &config, &result)?;
    Ok(result.runs_pass(config.numerics.mode))
}

fn print_fit(fit: &ScalingFit) {
    match fit.theory {
        TheoryForm::Power(alpha) => println!(
            "fit: slope {:.4} (theory {:.4}), r2 {:.5}, A = {:.6e}, envelope {}, sharp {}",
            fit.slope,
            -alpha,
            fit.r_squared,
            fit.envelope_constant,
            if fit.upper_bound_consistent { "consistent" } else { "VIOLATED" },
            fit.pass
        ),
        TheoryForm::Exponential => println!(
            "fit: log T = {:.4} + {:.4} eps^-(p-1), r2 {:.5}, envelope {}, linear {}",
            fit.intercept,
            fit.slope,
            fit.r_squared,
            if fit.upper_bound_consistent { "consistent" } else { "VIOLATED" },
            fit.pass
        ),
    }
    if !fit.pass {
        println!("warning: fitted decay differs from the theoretical rate by more than {}", fit.tolerance);
    }
}

fn plot(dir: &Path, points: &[(f64, f64)], fit: &ScalingFit, p: f64, title: &str) -> Result<(), CliError> {
    let reference: Box<dyn Fn(f64) -> f64> = match fit.theory {
        TheoryForm::Power(alpha) => {
            let a = fit.envelope_constant;
            Box::new(move |e: f64| a * e.powf(-alpha))
        }
        TheoryForm::Exponential => {
            let (b, s) = (fit.intercept, fit.slope);
            Box::new(move |e: f64| (b + s * e.powf(-(p - 1.0))).exp())
        }
    };
    write_file(&dir.join("lifespan.svg"), &lifespan_plot(points, Some(reference.as_ref()), title))?;
    Ok(())
}

fn sweep(common: &Common) -> Result<bool, CliError> {
    let config = load(common)?;
    config.validate_for_sweep()?;
    let dir = out_dir(common, Some(&config));
    let result = run_sweep(&config);
    for e in &result.entries {
        print_entry(e);
    }
    if !result.monotone {
        println!("lifespans are not strictly increasing as epsilon decreases");
    }
    match &result.fit {
        Some(Ok(fit)) => {
            print_fit(fit);
            if config.plot {
                let title = format!(
                    "n = {}, p = {}, {}",
                    config.problem.n,
                    config.problem.p,
                    config.problem.source_kind.as_str()
                );
                plot(&dir, &result.converged_points(), fit, config.problem.p, &title)?;
            }
        }
        Some(Err(e)) => println!("fit: {e}"),
        None => {}
    }
    output::write_sweep(&dir, "sweep", &config, &result)?;
    let pass = result.pass(config.numerics.mode);
    println!("sweep {}", status(pass));
    Ok(pass)
}

fn manifest_path(common: &Common) -> Result<&Path, CliError> {
    common.config.as_deref().ok_or_else(|| CliError::Usage("--config <manifest.json> is required".into()))
}

fn read_manifest(path: &Path) -> Result<Value, CliError> {
    let text = read_file(path)?;
    serde_json::from_str(&text)
        .map_err(|e| OutputError::Parse { path: path.display().to_string(), message: e.to_string() }.into())
}

/// Rebuilds a recorded run from its trace CSV and the manifest entry.
fn reload_run(config: &ExperimentConfig, dir: &Path, run: &Value) -> Result<Option<(f64, Simulation<f64>)>, CliError> {
    let (Some(epsilon), Some(trace), Some(t_max)) = (
        run.get("epsilon").and_then(Value::as_f64),
        run.get("trace").and_then(Value::as_str),
        run.get("t_max_used").and_then(Value::as_f64),
    ) else {
        return Ok(None);
    };
    let blowup = run.get("lifespan").and_then(lifespan_from_json);
    let path = dir.join(trace);
    let trace = parse_trace_csv(&read_file(&path)?, blowup, config.numerics.mode, &path.display().to_string())?;
    let sim_config = config.sim_config(epsilon, t_max);
    let numerical = |e: &dyn std::fmt::Display| CliError::Numerical(e.to_string());
    let grid = sim_config.grid().map_err(|e| numerical(&e))?;
    let weights = WeightPair::solve(&config.field, &grid).map_err(|e| numerical(&e))?;
    let report = blowup_core::wave::RunReport {
        coarse: blowup_core::wave::RunOutcome {
            dt: 0.0,
            steps: 0,
            t_end: trace.times.last().copied().unwrap_or(0.0),
            crossing: None,
            crossing_low: None,
            overflowed: false,
            max_support: 0.0,
        },
        grid,
        refined: None,
        lifespan: blowup,
    };
    Ok(Some((epsilon, Simulation { trace, weights, report })))
}

fn verify(common: &Common) -> Result<bool, CliError> {
    let path = manifest_path(common)?;
    let manifest = read_manifest(path)?;
    let config = load(common)?;
    let dir = out_dir(common, None);
    let trace_dir = path.parent().unwrap_or(Path::new("."));
    let runs = manifest.get("runs").and_then(Value::as_array).cloned().unwrap_or_default();

    let mut rows = Vec::new();
    let mut pass = true;
    let s = |v: f64| v.to_string();
    for run in &runs {
        let Some((epsilon, sim)) = reload_run(&config, trace_dir, run)? else {
            continue;
        };
        let (_, checks) = evaluate(&config, epsilon, &sim).map_err(|e| CliError::Numerical(e.to_string()))?;
        for c in &checks {
            pass &= c.pass();
            let (margin, ok) = match &c.result {
                Ok(InequalityReport { min_margin, pass, .. }) => (s(*min_margin), *pass),
                Err(_) => (String::new(), false),
            };
            println!("inequality {:<16} eps {epsilon:<8} {}", c.check.name(), status(ok));
            rows.push(vec![
                "inequality".into(),
                c.check.name().into(),
                s(epsilon),
                margin,
                String::new(),
                String::new(),
                ok.to_string(),
            ]);
        }
    }

    // integral estimates on a decade of times; the grid must reach the cone at t = 50
    let (t_min, t_max) = (5.0, 50.0);
    let h = config.numerics.spacing;
    let reach = t_max + config.domain.support_radius + 1.0;
    let grid = RadialGrid::uniform(config.problem.n, config.domain.r0, h, (reach / h).ceil() as usize);
    let weights = WeightPair::solve(&config.field, &grid).map_err(|e| CliError::Numerical(e.to_string()))?;
    let t_grid = geometric_grid(t_min, t_max, 12);
    for lemma in EstimateLemma::ALL {
        match verify_estimate_lemma(&weights, &config.problem, &config.domain, &t_grid, lemma) {
            Ok(fit) => {
                pass &= fit.pass;
                println!(
                    "estimate   {:<18} slope {:.4} theory {:.4} {}",
                    lemma.name(),
                    fit.slope_fit,
                    fit.exponent_theory,
                    status(fit.pass)
                );
                rows.push(vec![
                    "estimate".into(),
                    lemma.name().into(),
                    String::new(),
                    String::new(),
                    s(fit.slope_fit),
                    s(fit.exponent_theory),
                    fit.pass.to_string(),
                ]);
            }
            Err(FunctionalError::MissingPhi0) => {
                println!("estimate   {:<18} not applicable (n < 3)", lemma.name());
            }
            Err(e) => return Err(CliError::Numerical(e.to_string())),
        }
    }
    write_file(
        &dir.join("verify.csv"),
        &csv_string(&["kind", "name", "epsilon", "min_margin", "slope_fit", "exponent_theory", "pass"], rows),
    )?;
    println!("verify {}", status(pass));
    Ok(pass)
}

/// `T = int_1^inf dF / sqrt(2 (F^3 - 1) / 3)` for `F'' = F^2`, `F(0) = 1`, `F'(0) = 0`,
/// by Simpson's rule after `F = 1 + x^2`, `x = u / (1 - u)`.
pub fn quadratic_blowup_oracle() -> f64 {
    let g = |u: f64| {
        if u >= 1.0 {
            return 2.0 / (2.0f64 / 3.0).sqrt();
        }
        let x = u / (1.0 - u);
        2.0 / (2.0 / 3.0 * (3.0 + 3.0 * x * x + x.powi(4))).sqrt() / ((1.0 - u) * (1.0 - u))
    };
    let m = 20_000;
    let h = 1.0 / m as f64;
    let inner: f64 = (1..m).map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h)).sum();
    (g(0.0) + g(1.0) + inner) * h / 3.0
}

/// Riccati cases `(n, p, eps, C9, R)` covering both regimes.
pub const RICCATI_CASES: [(usize, f64, f64, f64, f64); 8] = [
    (1, 2.0, 0.1, 1.0, 1.0),
    (1, 3.0, 0.4, 0.5, 2.0),
    (2, 2.0, 0.3, 1.0, 1.0),
    (2, 2.5, 0.2, 2.0, 1.5),
    (3, 1.5, 0.4, 1.0, 1.0),
    (3, 2.0, 0.2, 1.0, 1.0),
    (3, 2.0, 0.5, 0.3, 2.0),
    (5, 1.5, 0.6, 1.0, 1.0),
];

/// One row of the ODE comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeRow {
    pub case: String,
    pub reference: f64,
    pub numerical: f64,
    pub pass: bool,
}

impl OdeRow {
    pub fn ratio(&self) -> f64 {
        self.numerical / self.reference
    }
}

pub fn ode_rows() -> Result<Vec<OdeRow>, CliError> {
    let numerical = |e: blowup_core::ode::OdeError| CliError::Numerical(e.to_string());
    let mut rows = Vec::new();
    let quad = OdeProblem { p: 2.0, a: 1.0, q: 0.0, radius: 1.0, delta: 0.5, k: 1.0, f_init: 1.0, f_rate_init: 0.0 };
    let oracle = quadratic_blowup_oracle();
    let t = integrate_sideris(&quad).map_err(numerical)?;
    rows.push(OdeRow {
        case: "quadratic_oracle".into(),
        reference: oracle,
        numerical: t.value,
        pass: t.certified() && ((t.value - oracle) / oracle).abs() < 1e-3,
    });

    let (p, a, q, radius) = (2.0, 2.0, 3.0, 1.0);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut exponent = 0.0;
    for delta in [1e-1, 1e-2, 1e-3, 1e-4] {
        let ode = OdeProblem::on_lower_bound(p, a, q, radius, delta, 1.0).map_err(numerical)?;
        exponent = ode.lifespan_exponent();
        let direct = integrate_sideris(&ode).map_err(numerical)?;
        let rescaled = rescale_sideris(&ode);
        let via = rescaled.original_time(integrate_sideris(&rescaled.problem).map_err(numerical)?.value);
        rows.push(OdeRow {
            case: format!("sideris_rescale_delta_{delta:e}"),
            reference: via,
            numerical: direct.value,
            pass: direct.certified() && ((direct.value - via) / via).abs() < 0.02,
        });
        xs.push(delta.ln());
        ys.push(direct.value.ln());
    }
    let slope = linear_fit(&xs, &ys).map(|f| f.0).unwrap_or(f64::NAN);
    rows.push(OdeRow {
        case: "sideris_delta_slope".into(),
        reference: -exponent,
        numerical: slope,
        pass: (slope + exponent).abs() <= 0.1,
    });

    for (n, p, eps, c9, radius) in RICCATI_CASES {
        let prob = RiccatiProblem::new(c9, 1.0, eps, n, p, radius).map_err(numerical)?;
        let exact = riccati_closed_form(&prob).value;
        let num = integrate_riccati(&prob).map_err(numerical)?.value;
        let regime = if prob.is_logarithmic() { "log" } else { "power" };
        rows.push(OdeRow {
            case: format!("riccati_{regime}_n{n}_p{p}_eps{eps}"),
            reference: exact,
            numerical: num,
            pass: ((num - exact) / exact).abs() < 0.01,
        });
    }
    Ok(rows)
}

fn verify_ode(common: &Common) -> Result<bool, CliError> {
    let dir = out_dir(common, None);
    let rows = ode_rows()?;
    for r in &rows {
        println!("{:<36} ref {:<14.8} num {:<14.8} {}", r.case, r.reference, r.numerical, status(r.pass));
    }
    let csv_rows = rows.iter().map(|r| {
        vec![
            r.case.clone(),
            r.reference.to_string(),
            r.numerical.to_string(),
            r.ratio().to_string(),
            r.pass.to_string(),
        ]
    });
    write_file(&dir.join("verify_ode.csv"), &csv_string(&["case", "T_closed", "T_num", "ratio", "pass"], csv_rows))?;
    Ok(rows.iter().all(|r| r.pass))
}

fn fit(common: &Common) -> Result<bool, CliError> {
    let path = manifest_path(common)?;
    let manifest = read_manifest(path)?;
    let config = load(common)?;
    let dir = out_dir(common, None);
    let points: Vec<(f64, f64)> = manifest
        .get("runs")
        .and_then(Value::as_array)
        .map(|runs| {
            runs.iter()
                .filter_map(|r| {
                    let eps = r.get("epsilon")?.as_f64()?;
                    let l = lifespan_from_json(r.get("lifespan")?)?;
                    l.converged.then_some((eps, l.t_num))
                })
                .collect()
        })
        .unwrap_or_default();
    let exponent =
        blowup_core::ode::theorem_exponent(&config.problem).map_err(|e| CliError::Numerical(e.to_string()))?;
    let theory = TheoryForm::from(exponent);
    let fit = fit_scaling(&points, theory, config.problem.p, config.fit_tolerance)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    print_fit(&fit);
    if config.plot {
        plot(&dir, &points, &fit, config.problem.p, "lifespan")?;
    }
    let mut m = header_json("fit", &config);
    m.insert("fit".into(), fit_json(&fit));
    m.insert("pass".into(), json!(fit.upper_bound_consistent));
    write_file(&dir.join("fit.json"), &to_pretty(&Value::Object(m)))?;
    Ok(fit.upper_bound_consistent)
}
