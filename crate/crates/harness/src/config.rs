//! Flat `key = value` configuration with dotted keys, `#` comments and
//! command-line overrides.
//!
//! A JSON manifest written by the harness can stand in for a config file: its
//! `config` object holds the fully resolved key set.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use blowup_core::domain::{CoefficientField, CoefficientProfile, DomainSpec, ProblemSpec, SourceKind};
use blowup_core::wave::{DataProfile, InitialData, SimConfig, SourceMode};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("override `{0}` is not of the form key=value")]
    BadOverride(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("manifest has no `config` object")]
    NotAManifest,
}

/// Keys with their defaults (`None` when there is no default).
const KEYS: &[(&str, Option<&str>)] = &[
    ("problem.n", None),
    ("problem.p", None),
    ("problem.source", None),
    ("domain.r0", Some("1")),
    ("domain.support_radius", Some("2")),
    ("coefficient.profile", Some("identity")),
    ("coefficient.amplitude", None),
    ("coefficient.center", None),
    ("coefficient.width", None),
    ("coefficient.c_ell", None),
    ("data.f", Some("zero")),
    ("data.f.amplitude", None),
    ("data.f.center", None),
    ("data.f.width", None),
    ("data.g", Some("zero")),
    ("data.g.amplitude", None),
    ("data.g.center", None),
    ("data.g.width", None),
    ("epsilons", None),
    ("numerics.spacing", Some("0.005")),
    ("numerics.cfl_factor", Some("0.5")),
    ("numerics.u_max", Some("100000000")),
    ("numerics.lifespan_tol", Some("0.02")),
    ("numerics.t_max", Some("100")),
    ("numerics.sample_interval", Some("0.1")),
    ("numerics.max_doublings", Some("3")),
    ("numerics.source", Some("nonlinear")),
    ("checks.tolerance", Some("0.001")),
    ("fit.tolerance", Some("0.2")),
    ("output.dir", None),
    ("output.plot", Some("false")),
    ("elliptic.r_outer", Some("12")),
];

/// Key/value pairs as written, before typing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax { line: idx + 1, message: "empty key or value".into() });
            }
            if raw.entries.contains_key(key) {
                return Err(ConfigError::Syntax { line: idx + 1, message: format!("duplicate key `{key}`") });
            }
            raw.set(key, value)?;
        }
        Ok(raw)
    }

    /// Reads the `config` object of a manifest.
    pub fn from_manifest(json: &serde_json::Value) -> Result<Self, ConfigError> {
        let obj = json.get("config").and_then(|c| c.as_object()).ok_or(ConfigError::NotAManifest)?;
        let mut raw = RawConfig::default();
        for (k, v) in obj {
            let value = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            raw.set(k, &value)?;
        }
        Ok(raw)
    }

    /// Loads a config file, or a manifest when the content is a JSON object.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        if text.trim_start().starts_with('{') {
            let json: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| ConfigError::Syntax { line: e.line(), message: e.to_string() })?;
            Self::from_manifest(&json)
        } else {
            Self::parse(&text)
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies `key=value`.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (k, v) = spec.split_once('=').ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(ConfigError::BadOverride(spec.to_string()));
        }
        self.set(k, v)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str).or_else(|| KEYS.iter().find(|(k, _)| *k == key).and_then(|(_, d)| *d))
    }

    /// Explicit entries plus every default, as recorded in manifests.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let mut out = self.entries.clone();
        for (k, d) in KEYS {
            if let Some(d) = d {
                out.entry(k.to_string()).or_insert_with(|| d.to_string());
            }
        }
        out
    }

    fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    fn number(&self, key: &str) -> Result<f64, ConfigError> {
        let s = self.require(key)?;
        let v: f64 = s
            .parse()
            .map_err(|_| ConfigError::Invalid { key: key.into(), message: format!("`{s}` is not a number") })?;
        if !v.is_finite() {
            return Err(ConfigError::Invalid { key: key.into(), message: "must be finite".into() });
        }
        Ok(v)
    }

    fn positive(&self, key: &str) -> Result<f64, ConfigError> {
        let v = self.number(key)?;
        if v <= 0.0 {
            return Err(ConfigError::Invalid { key: key.into(), message: format!("must be positive, got {v}") });
        }
        Ok(v)
    }

    fn integer(&self, key: &str) -> Result<usize, ConfigError> {
        let s = self.require(key)?;
        s.parse().map_err(|_| ConfigError::Invalid {
            key: key.into(),
            message: format!("`{s}` is not a nonnegative integer"),
        })
    }

    fn boolean(&self, key: &str) -> Result<bool, ConfigError> {
        match self.require(key)? {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            s => Err(ConfigError::Invalid { key: key.into(), message: format!("`{s}` is not a boolean") }),
        }
    }

    fn data_profile(&self, prefix: &str) -> Result<DataProfile<f64>, ConfigError> {
        match self.require(prefix)? {
            "zero" => Ok(DataProfile::Zero),
            "bump" => {
                let amplitude = self.number(&format!("{prefix}.amplitude")).or_else(|e| match e {
                    ConfigError::Missing(_) => Ok(1.0),
                    e => Err(e),
                })?;
                Ok(DataProfile::Bump {
                    amplitude,
                    center: self.number(&format!("{prefix}.center"))?,
                    width: self.positive(&format!("{prefix}.width"))?,
                })
            }
            s => Err(ConfigError::Invalid { key: prefix.into(), message: format!("unknown profile `{s}`") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Numerics {
    pub spacing: f64,
    pub cfl_factor: f64,
    pub u_max: f64,
    pub lifespan_tol: f64,
    pub t_max: f64,
    pub sample_interval: f64,
    pub max_doublings: usize,
    pub mode: SourceMode,
}

/// Typed experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec<f64>,
    pub domain: DomainSpec<f64>,
    pub field: CoefficientField<f64>,
    pub f: DataProfile<f64>,
    pub g: DataProfile<f64>,
    pub epsilons: Vec<f64>,
    pub numerics: Numerics,
    pub check_tolerance: f64,
    pub fit_tolerance: f64,
    pub out_dir: Option<PathBuf>,
    pub plot: bool,
    pub elliptic_r_outer: f64,
    pub raw: RawConfig,
}

impl ExperimentConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let invalid =
            |key: &str, e: &dyn std::fmt::Display| ConfigError::Invalid { key: key.into(), message: e.to_string() };
        let n = raw.integer("problem.n")?;
        let p = raw.number("problem.p")?;
        let kind = match raw.require("problem.source")? {
            "displacement" => SourceKind::DisplacementPower,
            "velocity" => SourceKind::VelocityPower,
            s => return Err(invalid("problem.source", &format!("expected displacement or velocity, got `{s}`"))),
        };
        let problem = ProblemSpec::new(n, p, kind).map_err(|e| invalid("problem", &e))?;
        let domain = DomainSpec::new(n, raw.number("domain.r0")?, raw.number("domain.support_radius")?)
            .map_err(|e| invalid("domain", &e))?;
        let profile = match raw.require("coefficient.profile")? {
            "identity" => CoefficientProfile::Identity,
            "bump" => CoefficientProfile::Bump {
                amplitude: raw.number("coefficient.amplitude")?,
                center: raw.number("coefficient.center")?,
                width: raw.positive("coefficient.width")?,
            },
            s => return Err(invalid("coefficient.profile", &format!("unknown profile `{s}`"))),
        };
        let field = match raw.get("coefficient.c_ell") {
            Some(_) => CoefficientField::new(profile, raw.number("coefficient.c_ell")?),
            None => CoefficientField::with_tight_ellipticity(profile),
        }
        .map_err(|e| invalid("coefficient", &e))?;
        let epsilons = raw
            .require("epsilons")?
            .split(',')
            .map(|s| {
                let s = s.trim();
                s.parse::<f64>().map_err(|_| invalid("epsilons", &format!("`{s}` is not a number")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if epsilons.is_empty() || epsilons.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(invalid("epsilons", &"amplitudes must lie in (0, 1]"));
        }
        if epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("epsilons", &"amplitudes must be strictly decreasing"));
        }
        let mode = match raw.require("numerics.source")? {
            "nonlinear" => SourceMode::Nonlinear,
            "off" => SourceMode::Off,
            s => return Err(invalid("numerics.source", &format!("expected nonlinear or off, got `{s}`"))),
        };
        let numerics = Numerics {
            spacing: raw.positive("numerics.spacing")?,
            cfl_factor: raw.positive("numerics.cfl_factor")?,
            u_max: raw.positive("numerics.u_max")?,
            lifespan_tol: raw.positive("numerics.lifespan_tol")?,
            t_max: raw.positive("numerics.t_max")?,
            sample_interval: raw.positive("numerics.sample_interval")?,
            max_doublings: raw.integer("numerics.max_doublings")?,
            mode,
        };
        if numerics.cfl_factor > 1.0 {
            return Err(invalid("numerics.cfl_factor", &"must not exceed 1"));
        }
        let config = Self {
            problem,
            domain,
            field,
            f: raw.data_profile("data.f")?,
            g: raw.data_profile("data.g")?,
            epsilons,
            numerics,
            check_tolerance: raw.positive("checks.tolerance")?,
            fit_tolerance: raw.positive("fit.tolerance")?,
            out_dir: raw.get("output.dir").map(PathBuf::from),
            plot: raw.boolean("output.plot")?,
            elliptic_r_outer: raw.positive("elliptic.r_outer")?,
            raw,
        };
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::load(path)?;
        for o in overrides {
            raw.apply_override(o)?;
        }
        Self::from_raw(raw)
    }

    /// Sweeps need at least three amplitudes for a scaling fit.
    pub fn validate_for_sweep(&self) -> Result<(), ConfigError> {
        if self.epsilons.len() < 3 {
            return Err(ConfigError::Invalid {
                key: "epsilons".into(),
                message: format!("a sweep needs at least 3 amplitudes, got {}", self.epsilons.len()),
            });
        }
        Ok(())
    }

    pub fn data(&self, epsilon: f64) -> InitialData<f64> {
        InitialData { f: self.f, g: self.g, epsilon }
    }

    pub fn sim_config(&self, epsilon: f64, t_max: f64) -> SimConfig<f64> {
        let n = &self.numerics;
        SimConfig {
            problem: self.problem,
            domain: self.domain,
            field: self.field,
            data: self.data(epsilon),
            spacing: n.spacing,
            cfl_factor: n.cfl_factor,
            u_max: n.u_max,
            t_max,
            sample_interval: n.sample_interval,
            lifespan_tol: n.lifespan_tol,
            mode: n.mode,
        }
    }

    /// Replaces the spacing, keeping the recorded config in sync.
    pub fn set_spacing(&mut self, spacing: f64) -> Result<(), ConfigError> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(ConfigError::Invalid { key: "numerics.spacing".into(), message: "must be positive".into() });
        }
        self.numerics.spacing = spacing;
        self.raw.set("numerics.spacing", &spacing.to_string())
    }
}
