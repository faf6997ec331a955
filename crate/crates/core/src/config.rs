//! Run configuration: a TOML document with `[family]`, `[solver]` and
//! `[task]` tables.
//!
//! Errors come in three kinds with distinct exit codes: malformed TOML,
//! schema violations (unknown or missing keys, wrong types) and values out
//! of range. Every message names the offending key.

use std::path::PathBuf;

use serde::Deserialize;
use thiserror::Error;

use crate::ambient::{
    schwarzschild_sphere_mean_curvature, DataFamily, ExtrinsicKind, MetricKind, PerturbationSpec, PerturbationTerm,
    SignBranch,
};
use crate::momentum::DriftForm;
use crate::solver::NewtonSettings;
use crate::sphere::SphericalGrid;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config schema error: {0}")]
    Schema(String),
    #[error("config value out of range: {key}: {message}")]
    Range { key: String, message: String },
}

impl ConfigError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Parse(_) => 4,
            ConfigError::Schema(_) => 5,
            ConfigError::Range { .. } => 6,
        }
    }

    fn range(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Range {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: Option<u32>,
    family: RawFamily,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    task: RawTask,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFamily {
    metric: MetricKind,
    mass: Option<f64>,
    decay: Option<f64>,
    inner_radius: Option<f64>,
    tau: Option<f64>,
    k_kind: Option<ExtrinsicKind>,
    momentum: Option<[f64; 3]>,
    york_coefficient: Option<u8>,
    sign_branch: Option<SignBranch>,
    perturbation: Option<RawPerturbation>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPerturbation {
    amplitude: f64,
    terms: Option<Vec<RawTerm>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    weight: f64,
    power: u32,
    axis: [f64; 3],
    matrix: [[f64; 3]; 3],
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    degree: Option<usize>,
    tolerance: Option<f64>,
    max_iterations: Option<usize>,
    step_halving_limit: Option<usize>,
    tau_step: Option<f64>,
    h_ratio: Option<f64>,
    strict: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    h: Option<Vec<f64>>,
    radii: Option<Vec<f64>>,
    curve: Option<Vec<[f64; 2]>>,
    output_dir: Option<PathBuf>,
    form: Option<DriftForm>,
    seed: Option<u64>,
}

/// Subcommand parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    /// Target values of `H ± P`, in the order given.
    pub h: Vec<f64>,
    /// Optional `(h, τ)` continuation curve starting at `τ = 0`.
    pub curve: Option<Vec<(f64, f64)>>,
    pub output_dir: PathBuf,
    pub form: DriftForm,
    pub seed: u64,
}

/// Validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub schema_version: u32,
    pub family: DataFamily,
    pub settings: NewtonSettings,
    pub degree: usize,
    pub strict: bool,
    pub task: TaskConfig,
}

fn check_finite(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::range(key, "must be finite"))
    }
}

fn build_family(raw: RawFamily) -> Result<DataFamily, ConfigError> {
    let mut fam = match raw.metric {
        MetricKind::Euclidean => DataFamily::euclidean(),
        MetricKind::Schwarzschild | MetricKind::SchwarzschildPlusPerturbation => {
            let m = raw
                .mass
                .ok_or_else(|| ConfigError::Schema("family.mass is required for Schwarzschild data".into()))?;
            if !(m > 0.0 && m.is_finite()) {
                return Err(ConfigError::range("family.mass", "must be positive"));
            }
            DataFamily::schwarzschild(m)
        }
    };
    fam.metric_kind = raw.metric;
    if let Some(m) = raw.mass {
        if raw.metric == MetricKind::Euclidean && m != 0.0 {
            return Err(ConfigError::range("family.mass", "must be 0 for euclidean data"));
        }
    }
    if let Some(d) = raw.decay {
        if !(check_finite("family.decay", d)? >= 0.0) {
            return Err(ConfigError::range("family.decay", "must be nonnegative"));
        }
        fam.decay = d;
    }
    if let Some(s) = raw.inner_radius {
        if !(check_finite("family.inner_radius", s)? > 0.0) {
            return Err(ConfigError::range("family.inner_radius", "must be positive"));
        }
        fam.inner_radius = s;
    }
    if let Some(t) = raw.tau {
        if !(0.0..=1.0).contains(&t) {
            return Err(ConfigError::range("family.tau", format!("{t} is outside [0, 1]")));
        }
        fam.tau = t;
    }
    if let Some(k) = raw.k_kind {
        fam.k_kind = k;
    }
    if let Some(p) = raw.momentum {
        for v in p {
            check_finite("family.momentum", v)?;
        }
        fam.momentum = p;
    }
    if let Some(c) = raw.york_coefficient {
        if !matches!(c, 1 | 2) {
            return Err(ConfigError::range("family.york_coefficient", "must be 1 or 2"));
        }
        fam.york_coefficient = c;
    }
    if let Some(b) = raw.sign_branch {
        fam.sign_branch = b;
    }
    match (raw.metric, raw.perturbation) {
        (MetricKind::SchwarzschildPlusPerturbation, Some(p)) => {
            if !(p.amplitude >= 0.0 && p.amplitude.is_finite()) {
                return Err(ConfigError::range("family.perturbation.amplitude", "must be nonnegative"));
            }
            let mut spec = PerturbationSpec::standard(p.amplitude);
            if let Some(terms) = p.terms {
                spec.terms = terms
                    .into_iter()
                    .map(|t| PerturbationTerm {
                        weight: t.weight,
                        power: t.power,
                        axis: t.axis,
                        matrix: t.matrix,
                    })
                    .collect();
            }
            spec.validate()
                .map_err(|e| ConfigError::range("family.perturbation.terms", e.to_string()))?;
            fam.perturbation = spec;
        }
        (MetricKind::SchwarzschildPlusPerturbation, None) => {
            return Err(ConfigError::Schema(
                "family.perturbation is required for schwarzschild_plus_perturbation".into(),
            ));
        }
        (_, Some(_)) => {
            return Err(ConfigError::Schema(
                "family.perturbation is only allowed with schwarzschild_plus_perturbation".into(),
            ));
        }
        (_, None) => {}
    }
    fam.validate()
        .map_err(|e| ConfigError::range("family", e.to_string()))?;
    Ok(fam)
}

fn build_solver(raw: RawSolver) -> Result<(NewtonSettings, usize, bool), ConfigError> {
    let mut s = NewtonSettings::default();
    if let Some(t) = raw.tolerance {
        if !(t >= 1e-13 && t.is_finite()) {
            return Err(ConfigError::range("solver.tolerance", "must be at least 1e-13"));
        }
        s.tolerance = t;
    }
    if let Some(n) = raw.max_iterations {
        if n == 0 {
            return Err(ConfigError::range("solver.max_iterations", "must be positive"));
        }
        s.max_iterations = n;
    }
    if let Some(n) = raw.step_halving_limit {
        if n == 0 {
            return Err(ConfigError::range("solver.step_halving_limit", "must be positive"));
        }
        s.step_halving_limit = n;
    }
    if let Some(t) = raw.tau_step {
        if !(t > 0.0 && t <= 1.0) {
            return Err(ConfigError::range("solver.tau_step", "must lie in (0, 1]"));
        }
        s.tau_step = t;
    }
    if let Some(r) = raw.h_ratio {
        if !(r > 0.0 && r < 1.0) {
            return Err(ConfigError::range("solver.h_ratio", "must lie in (0, 1)"));
        }
        s.h_ratio = r;
    }
    let degree = raw.degree.unwrap_or(SphericalGrid::DEFAULT_DEGREE);
    if !(2..=127).contains(&degree) {
        return Err(ConfigError::range("solver.degree", "must lie in [2, 127]"));
    }
    Ok((s, degree, raw.strict.unwrap_or(false)))
}

fn build_task(raw: RawTask, family: &DataFamily) -> Result<TaskConfig, ConfigError> {
    let h = match (raw.h, raw.radii) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::Schema("task.h and task.radii are mutually exclusive".into()));
        }
        (Some(h), None) => {
            for v in &h {
                if !(*v > 0.0 && v.is_finite()) {
                    return Err(ConfigError::range("task.h", format!("{v} must be positive")));
                }
            }
            h
        }
        (None, Some(r)) => {
            let m = family.effective_mass();
            let mut out = Vec::with_capacity(r.len());
            for v in r {
                if !(v > 2.0 * family.inner_radius && v.is_finite()) {
                    return Err(ConfigError::range(
                        "task.radii",
                        format!("{v} must exceed twice the inner radius"),
                    ));
                }
                if m > 0.0 && v <= m * (2.0 + 3f64.sqrt()) / 2.0 {
                    return Err(ConfigError::range("task.radii", format!("{v} is inside the turning radius")));
                }
                out.push(schwarzschild_sphere_mean_curvature(m, v));
            }
            out
        }
        (None, None) => Vec::new(),
    };
    if h.len() > 1 {
        let dec = h.windows(2).all(|w| w[1] < w[0]);
        let inc = h.windows(2).all(|w| w[1] > w[0]);
        if !(dec || inc) {
            return Err(ConfigError::range("task.h", "values must be strictly monotone"));
        }
    }
    let curve = match raw.curve {
        Some(c) => {
            if c.is_empty() || c[0][1] != 0.0 {
                return Err(ConfigError::range("task.curve", "must start at tau = 0"));
            }
            for p in &c {
                if !(p[0] > 0.0 && p[0].is_finite()) {
                    return Err(ConfigError::range("task.curve", format!("h = {} must be positive", p[0])));
                }
                if !(0.0..=1.0).contains(&p[1]) {
                    return Err(ConfigError::range("task.curve", format!("tau = {} is outside [0, 1]", p[1])));
                }
            }
            Some(c.into_iter().map(|p| (p[0], p[1])).collect())
        }
        None => None,
    };
    Ok(TaskConfig {
        h,
        curve,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        form: raw.form.unwrap_or(match family.k_kind {
            ExtrinsicKind::CorvinoSchoen => DriftForm::CorvinoSchoen,
            _ => DriftForm::York,
        }),
        seed: raw.seed.unwrap_or(0),
    })
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let value: toml::Value = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let raw: RawConfig = value
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Schema(e.message().to_string()))?;
    let schema_version = raw.schema_version.unwrap_or(SCHEMA_VERSION);
    if schema_version != SCHEMA_VERSION {
        return Err(ConfigError::range(
            "schema_version",
            format!("unsupported version {schema_version} (expected {SCHEMA_VERSION})"),
        ));
    }
    let family = build_family(raw.family)?;
    let (settings, degree, strict) = build_solver(raw.solver)?;
    let task = build_task(raw.task, &family)?;
    Ok(RunConfig {
        schema_version,
        family,
        settings,
        degree,
        strict,
        task,
    })
}
