//! CSV traces, sweep summaries, check tables and JSON manifests.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value reads back bit for bit.

use std::fs;
use std::io;
use std::path::Path;

use blowup_core::functionals::{CheckMode, InequalityContext, SimTrace};
use blowup_core::wave::{LifespanResult, SourceMode};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::fit::{ScalingFit, TheoryForm};
use crate::sweep::{CheckOutcome, RunRecord, SweepResult};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), OutputError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| OutputError::Io { path: parent.display().to_string(), source })?;
    }
    fs::write(path, contents).map_err(|source| OutputError::Io { path: path.display().to_string(), source })
}

pub fn read_file(path: &Path) -> Result<String, OutputError> {
    fs::read_to_string(path).map_err(|source| OutputError::Io { path: path.display().to_string(), source })
}

pub const TRACE_COLUMNS: [&str; 13] = [
    "t",
    "F0",
    "F1",
    "G0",
    "Fcum",
    "sup_u",
    "sup_v",
    "psi1_ut",
    "source_phi0",
    "source_phi0_double",
    "source_psi1",
    "cum_source",
    "rate",
];

pub fn trace_file_name(index: usize) -> String {
    format!("trace_{index:02}.csv")
}

fn opt(v: Option<&Vec<f64>>, i: usize) -> String {
    v.map(|v| v[i].to_string()).unwrap_or_default()
}

pub fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("CSV fields are UTF-8")
}

fn csv_records(text: &str, header: &[&str], path: &str) -> Result<Vec<csv::StringRecord>, OutputError> {
    let err = |message: String| OutputError::Parse { path: path.to_string(), message };
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let found = r.headers().map_err(|e| err(e.to_string()))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(err(format!("unexpected header `{}`", found.iter().collect::<Vec<_>>().join(","))));
    }
    r.records().collect::<Result<Vec<_>, _>>().map_err(|e| err(e.to_string()))
}

pub fn trace_csv(trace: &SimTrace<f64>) -> String {
    let rows = (0..trace.len()).map(|i| {
        vec![
            trace.times[i].to_string(),
            opt(trace.f0.as_ref(), i),
            trace.f1[i].to_string(),
            trace.g0[i].to_string(),
            trace.fcum[i].to_string(),
            trace.sup_u[i].to_string(),
            trace.sup_v[i].to_string(),
            trace.psi1_ut[i].to_string(),
            opt(trace.source_phi0.as_ref(), i),
            opt(trace.source_phi0_double.as_ref(), i),
            trace.source_psi1[i].to_string(),
            trace.cum_source[i].to_string(),
            trace.rate[i].to_string(),
        ]
    });
    csv_string(&TRACE_COLUMNS, rows)
}

/// Parses a trace written by [`trace_csv`]; lifespan and mode come from the manifest.
pub fn parse_trace_csv(
    text: &str,
    blowup: Option<LifespanResult<f64>>,
    mode: SourceMode,
    path: &str,
) -> Result<SimTrace<f64>, OutputError> {
    let err = |row: usize, message: String| OutputError::Parse {
        path: path.to_string(),
        message: format!("row {row}: {message}"),
    };
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); TRACE_COLUMNS.len()];
    let mut has_phi0 = None;
    for (idx, rec) in csv_records(text, &TRACE_COLUMNS, path)?.iter().enumerate() {
        let row_phi0 = !rec[1].is_empty();
        if *has_phi0.get_or_insert(row_phi0) != row_phi0 {
            return Err(err(idx + 1, "F0 present on some rows only".into()));
        }
        for (c, f) in rec.iter().enumerate() {
            if f.is_empty() && !row_phi0 && matches!(c, 1 | 8 | 9) {
                continue;
            }
            let v = f.parse::<f64>().map_err(|_| err(idx + 1, format!("`{f}` is not a number")))?;
            cols[c].push(v);
        }
    }
    let has_phi0 = has_phi0.unwrap_or(false);
    let mut it = cols.into_iter();
    let mut next = || it.next().unwrap_or_default();
    let times = next();
    let f0 = next();
    let f1 = next();
    let g0 = next();
    let fcum = next();
    let sup_u = next();
    let sup_v = next();
    let psi1_ut = next();
    let source_phi0 = next();
    let source_phi0_double = next();
    Ok(SimTrace {
        times,
        f0: has_phi0.then_some(f0),
        f1,
        g0,
        fcum,
        sup_u,
        sup_v,
        psi1_ut,
        source_phi0: has_phi0.then_some(source_phi0),
        source_phi0_double: has_phi0.then_some(source_phi0_double),
        source_psi1: next(),
        cum_source: next(),
        rate: next(),
        blowup,
        mode,
    })
}

pub const SUMMARY_COLUMNS: [&str; 3] = ["epsilon", "T_num", "converged"];

pub fn summary_csv(result: &SweepResult) -> String {
    let rows = result.entries.iter().map(|e| {
        let (t, converged) = match &e.outcome {
            Ok(r) => (r.lifespan().map(|t| t.to_string()).unwrap_or_default(), r.converged()),
            Err(_) => (String::new(), false),
        };
        vec![e.epsilon.to_string(), t, converged.to_string()]
    });
    csv_string(&SUMMARY_COLUMNS, rows)
}

/// Reads `(epsilon, T_num, converged)` rows.
pub fn parse_summary_csv(text: &str, path: &str) -> Result<Vec<(f64, Option<f64>, bool)>, OutputError> {
    let err = |message: String| OutputError::Parse { path: path.to_string(), message };
    csv_records(text, &SUMMARY_COLUMNS, path)?
        .iter()
        .map(|rec| {
            let eps = rec[0].parse().map_err(|_| err(format!("bad epsilon `{}`", &rec[0])))?;
            let t = match &rec[1] {
                "" => None,
                s => Some(s.parse().map_err(|_| err(format!("bad T_num `{s}`")))?),
            };
            let conv = rec[2].parse().map_err(|_| err(format!("bad flag `{}`", &rec[2])))?;
            Ok((eps, t, conv))
        })
        .collect()
}

fn mode_name(mode: CheckMode) -> &'static str {
    match mode {
        CheckMode::Inequality => "inequality",
        CheckMode::SourceOffIdentity => "source_off_identity",
    }
}

pub fn checks_csv(result: &SweepResult) -> String {
    let mut rows = Vec::new();
    for e in &result.entries {
        let Ok(r) = &e.outcome else { continue };
        for c in &r.checks {
            rows.push(match &c.result {
                Ok(rep) => vec![
                    e.epsilon.to_string(),
                    rep.name.to_string(),
                    mode_name(rep.mode).to_string(),
                    rep.min_margin.to_string(),
                    rep.tolerance.to_string(),
                    rep.pass.to_string(),
                    String::new(),
                ],
                Err(err) => vec![
                    e.epsilon.to_string(),
                    c.check.name().to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    "false".into(),
                    err.to_string(),
                ],
            });
        }
    }
    csv_string(&["epsilon", "check", "mode", "min_margin", "tolerance", "pass", "error"], rows)
}

pub fn lifespan_json(l: &LifespanResult<f64>) -> Value {
    json!({
        "t_num": l.t_num,
        "t_coarse": l.t_coarse,
        "threshold": l.threshold,
        "dt_used": l.dt_used,
        "converged": l.converged,
        "t_low_threshold": l.t_low_threshold,
        "threshold_sensitive": l.threshold_sensitive,
    })
}

pub fn lifespan_from_json(v: &Value) -> Option<LifespanResult<f64>> {
    let f = |k: &str| v.get(k).and_then(Value::as_f64);
    let b = |k: &str| v.get(k).and_then(Value::as_bool);
    Some(LifespanResult {
        t_num: f("t_num")?,
        t_coarse: f("t_coarse")?,
        threshold: f("threshold")?,
        dt_used: f("dt_used")?,
        converged: b("converged")?,
        t_low_threshold: f("t_low_threshold")?,
        threshold_sensitive: b("threshold_sensitive")?,
    })
}

pub fn constants_json(c: &InequalityContext<f64>) -> Value {
    json!({
        "c0": c.c0,
        "delta": c.delta,
        "k": c.k,
        "c5": c.c5,
        "c8": c.c8,
        "c9": c.c9,
        "growth_exponent": c.growth_exponent,
        "m_data": c.m_data,
        "int_f_phi1": c.int_f_phi1,
        "int_g_phi1": c.int_g_phi1,
        "f0_init": c.f0_init,
        "f0_rate_init": c.f0_rate_init,
    })
}

fn check_json(c: &CheckOutcome) -> Value {
    match &c.result {
        Ok(r) => json!({
            "name": r.name,
            "mode": mode_name(r.mode),
            "min_margin": r.min_margin,
            "tolerance": r.tolerance,
            "pass": r.pass,
        }),
        Err(e) => json!({ "name": c.check.name(), "pass": false, "error": e.to_string() }),
    }
}

fn run_json(index: usize, r: &RunRecord) -> Value {
    json!({
        "epsilon": r.epsilon,
        "trace": trace_file_name(index),
        "t_max_used": r.t_max_used,
        "lifespan": r.sim.trace.blowup.as_ref().map(lifespan_json),
        "constants": constants_json(&r.context),
        "checks": r.checks.iter().map(check_json).collect::<Vec<_>>(),
        "g0_min": r.g0_min,
        "ode_bound": r.ode_bound,
    })
}

pub fn fit_json(fit: &ScalingFit) -> Value {
    let (form, alpha) = match fit.theory {
        TheoryForm::Power(a) => ("power", Some(a)),
        TheoryForm::Exponential => ("exponential", None),
    };
    json!({
        "form": form,
        "alpha_theory": alpha,
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "envelope_constant": fit.envelope_constant,
        "upper_bound_consistent": fit.upper_bound_consistent,
        "sharp": fit.pass,
        "tolerance": fit.tolerance,
    })
}

/// Fixed-format UTC timestamp; the only field excluded from reproducibility comparisons.
pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Resolved configuration as recorded in manifests. The output directory is a
/// property of the invocation, not the experiment, and is left out.
pub fn config_json(config: &ExperimentConfig) -> Value {
    let map: Map<String, Value> = config
        .raw
        .resolved()
        .into_iter()
        .filter(|(k, _)| k != "output.dir")
        .map(|(k, v)| (k, Value::String(v)))
        .collect();
    Value::Object(map)
}

pub fn header_json(command: &str, config: &ExperimentConfig) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("tool".into(), json!(env!("CARGO_PKG_NAME")));
    m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("command".into(), json!(command));
    m.insert("timestamp".into(), json!(timestamp()));
    m.insert("config".into(), config_json(config));
    m
}

pub fn sweep_manifest(command: &str, config: &ExperimentConfig, result: &SweepResult) -> Value {
    let mut m = header_json(command, config);
    let runs: Vec<Value> = result
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| match &e.outcome {
            Ok(r) => run_json(i, r),
            Err(err) => json!({ "epsilon": e.epsilon, "error": err.to_string() }),
        })
        .collect();
    m.insert("runs".into(), Value::Array(runs));
    m.insert("monotone".into(), json!(result.monotone));
    let fit = match &result.fit {
        Some(Ok(f)) => fit_json(f),
        Some(Err(e)) => json!({ "error": e.to_string() }),
        None => Value::Null,
    };
    m.insert("fit".into(), fit);
    m.insert("pass".into(), json!(result.pass(config.numerics.mode)));
    Value::Object(m)
}

pub fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// Writes traces, summary, checks and manifest for a sweep; returns the file names.
pub fn write_sweep(
    dir: &Path,
    command: &str,
    config: &ExperimentConfig,
    result: &SweepResult,
) -> Result<Vec<String>, OutputError> {
    let mut files = Vec::new();
    for (i, e) in result.entries.iter().enumerate() {
        if let Ok(r) = &e.outcome {
            let name = trace_file_name(i);
            write_file(&dir.join(&name), &trace_csv(&r.sim.trace))?;
            files.push(name);
        }
    }
    for (name, body) in [("summary.csv", summary_csv(result)), ("checks.csv", checks_csv(result))] {
        write_file(&dir.join(name), &body)?;
        files.push(name.to_string());
    }
    write_file(&dir.join("manifest.json"), &to_pretty(&sweep_manifest(command, config, result)))?;
    files.push("manifest.json".into());
    Ok(files)
}
