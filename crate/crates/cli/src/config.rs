// Copyright 2026 The cqsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Run configuration. A config is a TOML file with flat sections; setting
//! `scenario = "<preset>"` layers the file on top of a built-in preset.
//!
//! Validation never stops at the first problem: unknown keys, type errors and
//! physical constraint violations are all collected and reported together.

use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use cqsim_core::cq_coeffs::ModelConfig;
use cqsim_core::cq_master::{EvolutionConfig, HybridStencil, Integrator, Observable};
use cqsim_core::hilbert::{min_eigenvalue, QuantumOperator};
use cqsim_core::kernels::LocalMoments;
use cqsim_core::semi_wigner::PhaseSpaceGrid;
use cqsim_core::unraveling::{EnsembleConfig, MIN_TRAJECTORIES};

use crate::presets;

/// Default seed of the stochastic unraveling.
pub const DEFAULT_SEED: u64 = 20261017;

const SOURCES: [&str; 3] = ["moments", "kernels", "environment"];

const SECTIONS: &[(&str, &[&str])] = &[
    ("model", &["hbar", "lambda1", "omega_c", "h_psi", "f2"]),
    (
        "moments",
        &[
            "N22", "N33", "N23", "N32", "N22_2", "N33_2", "N23_2", "N32_2", "D22", "D33", "D23", "D32", "D22_1",
            "D33_1", "D23_1", "D32_1",
        ],
    ),
    ("kernels", &["dir"]),
    (
        "environment",
        &[
            "correlator",
            "omega",
            "linewidth",
            "eta",
            "cutoff",
            "temperature",
            "lambda2",
            "lambda3",
            "window",
            "step",
        ],
    ),
    ("grid", &["h_min", "h_max", "n_h", "pi_min", "pi_max", "n_pi"]),
    ("initial", &["shape", "h0", "pi0", "sigma_h", "sigma_pi", "rho"]),
    (
        "evolution",
        &[
            "dt",
            "t_final",
            "output_stride",
            "records",
            "integrator",
            "monitor_positivity",
            "boundary_cells",
            "boundary_threshold",
            "trace_tolerance",
            "hybrid_stencil",
        ],
    ),
    ("unravel", &["trajectories", "dt", "t_final", "output_stride", "seed"]),
    ("check_kernel", &["points"]),
];

const OBSERVABLE_KEYS: &[&str] = &["name", "op"];

/// Column names reserved for the built-in diagnostics.
const RESERVED_NAMES: &[&str] = &[
    "t",
    "trace",
    "min_p",
    "min_eig",
    "mean_h",
    "mean_pi",
    "var_h",
    "var_pi",
    "hermiticity",
    "boundary",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin} is not valid TOML: {message}")]
    Syntax { origin: String, message: String },
    #[error("invalid configuration ({} problem{}):\n{}", .0.len(), if .0.len() == 1 { "" } else { "s" },
        .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<String>),
}

/// Operator given either as a real matrix or as rows of `[re, im]` pairs.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OperatorSpec {
    Real(Vec<Vec<f64>>),
    Complex(QuantumOperator),
}

fn operator<'de, D: serde::Deserializer<'de>>(d: D) -> Result<QuantumOperator, D::Error> {
    use serde::de::Error;
    match OperatorSpec::deserialize(d)
        .map_err(|_| D::Error::custom("expected a square matrix of reals or of [re, im] pairs"))?
    {
        OperatorSpec::Complex(op) => Ok(op),
        OperatorSpec::Real(rows) => {
            let d = rows.len();
            if rows.iter().any(|r| r.len() != d) {
                return Err(D::Error::custom("operator matrix is not square"));
            }
            let entries: Vec<C64> = rows.iter().flatten().map(|&x| C64::new(x, 0.0)).collect();
            QuantumOperator::from_row_slice(d, &entries).map_err(D::Error::custom)
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
struct ModelSection {
    #[serde(default = "one")]
    hbar: f64,
    lambda1: f64,
    #[serde(default)]
    omega_c: f64,
    #[serde(deserialize_with = "operator")]
    h_psi: QuantumOperator,
    #[serde(deserialize_with = "operator")]
    f2: QuantumOperator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelatorName {
    ThermalMode,
    Ohmic,
}

/// Environment correlator parameters, in units where `ħ` is `model.hbar`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSection {
    pub correlator: CorrelatorName,
    /// Mode frequency (thermal mode).
    pub omega: Option<f64>,
    /// Exponential broadening rate (thermal mode).
    #[serde(default)]
    pub linewidth: f64,
    /// Ohmic coupling strength.
    pub eta: Option<f64>,
    /// Ohmic exponential cutoff frequency.
    pub cutoff: Option<f64>,
    pub temperature: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Half-width of the lag window; defaults to `50/ω`.
    pub window: Option<f64>,
    /// Lag step; defaults to `0.01/ω`.
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
struct KernelsSection {
    dir: PathBuf,
}

/// Where the local moments come from.
#[derive(Debug, Clone, PartialEq)]
pub enum MomentSource {
    Moments(LocalMoments),
    /// Directory of `<kind>_<pair>.csv` kernel files.
    Kernels(PathBuf),
    Environment(EnvironmentSection),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialShape {
    #[default]
    Gaussian,
    PointMass,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct InitialSection {
    #[serde(default)]
    pub shape: InitialShape,
    #[serde(default)]
    pub h0: f64,
    #[serde(default)]
    pub pi0: f64,
    pub sigma_h: Option<f64>,
    pub sigma_pi: Option<f64>,
    #[serde(deserialize_with = "operator")]
    pub rho: QuantumOperator,
}

/// Evolution settings. Without `dt` the step is the largest stable one that
/// divides `t_final` into a multiple of `records` (default 10) intervals.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct EvolutionSection {
    pub dt: Option<f64>,
    pub t_final: f64,
    pub output_stride: Option<usize>,
    pub records: Option<usize>,
    pub integrator: Option<Integrator>,
    pub monitor_positivity: Option<bool>,
    pub boundary_cells: Option<usize>,
    pub boundary_threshold: Option<f64>,
    pub trace_tolerance: Option<f64>,
    pub hybrid_stencil: Option<HybridStencil>,
}

impl EvolutionSection {
    /// Concrete settings given the stability bound of the generator on the grid.
    pub fn resolve(&self, max_dt: f64) -> EvolutionConfig {
        let d = EvolutionConfig::default();
        let records = self.records.unwrap_or(10).max(1);
        let (dt, stride) = match (self.dt, self.output_stride) {
            (Some(dt), Some(s)) => (dt, s),
            (Some(dt), None) => {
                let steps = (self.t_final / dt).round().max(1.0) as usize;
                (dt, (steps / records).max(1))
            }
            (None, stride) => {
                let min_steps = (self.t_final / max_dt).ceil().max(1.0) as usize;
                let steps = match stride {
                    Some(s) => min_steps.div_ceil(s) * s,
                    None => min_steps.div_ceil(records) * records,
                };
                (self.t_final / steps as f64, stride.unwrap_or(steps / records))
            }
        };
        EvolutionConfig {
            dt,
            t_final: self.t_final,
            output_stride: stride,
            integrator: self.integrator.unwrap_or(d.integrator),
            monitor_positivity: self.monitor_positivity.unwrap_or(d.monitor_positivity),
            boundary_cells: self.boundary_cells.unwrap_or(d.boundary_cells),
            boundary_threshold: self.boundary_threshold.unwrap_or(d.boundary_threshold),
            trace_tolerance: self.trace_tolerance.unwrap_or(d.trace_tolerance),
            keep_snapshots: false,
            hybrid_stencil: self.hybrid_stencil.unwrap_or(d.hybrid_stencil),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct UnravelSection {
    pub trajectories: usize,
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl UnravelSection {
    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            trajectories: self.trajectories,
            dt: self.dt,
            t_final: self.t_final,
            output_stride: self.output_stride,
            seed: self.seed,
            deposit_final: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ObservableSection {
    name: String,
    #[serde(deserialize_with = "operator")]
    op: QuantumOperator,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
pub struct CheckKernelSection {
    /// Points of the evaluation time grid.
    pub points: Option<usize>,
}

/// A validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Option<String>,
    pub model: ModelConfig,
    pub source: MomentSource,
    pub grid: Option<PhaseSpaceGrid>,
    pub initial: Option<InitialSection>,
    pub evolution: Option<EvolutionSection>,
    pub unravel: Option<UnravelSection>,
    pub observables: Vec<Observable>,
    pub check_kernel: CheckKernelSection,
    /// The fully merged document, with relative paths made absolute.
    pub resolved: Table,
}

impl RunConfig {
    /// Canonical text of the resolved config; keys are sorted.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(&self.resolved).expect("a parsed TOML table always serializes")
    }
}

/// Reads and validates a config file. Relative paths inside it are taken
/// relative to the file's directory.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_str(&text, &path.display().to_string(), &base)
}

/// Parses config text; `origin` names the text in error messages.
pub fn parse_str(text: &str, origin: &str, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax {
        origin: origin.to_string(),
        message: e.to_string(),
    })?;
    from_table(table, base_dir)
}

/// The config of a built-in preset.
pub fn preset_config(name: &str) -> Result<RunConfig, ConfigError> {
    let mut t = Table::new();
    t.insert("scenario".into(), Value::String(name.into()));
    from_table(t, Path::new("."))
}

/// Layers `table` on its preset (if any) and validates the result.
pub fn from_table(table: Table, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    let mut violations = Vec::new();
    let mut merged = match table.get("scenario") {
        Some(Value::String(name)) => match presets::find(name) {
            Some(p) => {
                let mut base: Table = p.toml.parse().expect("built-in presets are valid TOML");
                base.insert("scenario".into(), Value::String(name.clone()));
                merge(&mut base, table);
                base
            }
            None => {
                violations.push(format!(
                    "unknown scenario \"{name}\"; available: {}",
                    presets::names().join(", ")
                ));
                table
            }
        },
        Some(other) => {
            violations.push(format!("scenario must be a string, got {}", other.type_str()));
            table
        }
        None => table,
    };
    absolutize_kernel_dir(&mut merged, base_dir);
    build(merged, violations)
}

/// Deep merge of `over` into `base`. A moment source in `over` replaces
/// whichever source `base` had, and arrays are replaced wholesale.
fn merge(base: &mut Table, over: Table) {
    if SOURCES.iter().any(|s| over.contains_key(*s)) {
        for s in SOURCES {
            base.remove(s);
        }
    }
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn absolutize_kernel_dir(t: &mut Table, base_dir: &Path) {
    if let Some(Value::Table(k)) = t.get_mut("kernels") {
        if let Some(Value::String(dir)) = k.get("dir") {
            let p = Path::new(dir);
            if p.is_relative() {
                let joined = base_dir.join(p);
                let abs = std::path::absolute(&joined).unwrap_or(joined);
                k.insert("dir".into(), Value::String(abs.display().to_string()));
            }
        }
    }
}

fn section<T: DeserializeOwned>(t: &Table, name: &str, violations: &mut Vec<String>) -> Option<T> {
    let v = t.get(name)?;
    match v.clone().try_into::<T>() {
        Ok(s) => Some(s),
        Err(e) => {
            violations.push(format!("[{name}]: {}", e.message().trim()));
            None
        }
    }
}

fn check_keys(t: &Table, violations: &mut Vec<String>) {
    for (k, v) in t {
        if k == "scenario" {
            continue;
        }
        if k == "observables" {
            match v {
                Value::Array(items) => {
                    for (i, item) in items.iter().enumerate() {
                        match item {
                            Value::Table(o) => unknown_in(o, &format!("observables[{i}]"), OBSERVABLE_KEYS, violations),
                            _ => violations.push(format!("observables[{i}] must be a table")),
                        }
                    }
                }
                _ => violations.push("observables must be an array of tables ([[observables]])".into()),
            }
            continue;
        }
        match SECTIONS.iter().find(|(s, _)| s == k) {
            Some((_, keys)) => match v {
                Value::Table(s) => unknown_in(s, k, keys, violations),
                _ => violations.push(format!("{k} must be a section ([{k}])")),
            },
            None => violations.push(format!("unknown key \"{k}\" at top level")),
        }
    }
}

fn unknown_in(t: &Table, section: &str, keys: &[&str], violations: &mut Vec<String>) {
    for k in t.keys() {
        if !keys.contains(&k.as_str()) {
            violations.push(format!("unknown key \"{k}\" in [{section}]"));
        }
    }
}

fn positive(violations: &mut Vec<String>, what: &str, x: f64) {
    if !(x > 0.0 && x.is_finite()) {
        violations.push(format!("{what} must be positive, got {x}"));
    }
}

fn build(t: Table, mut violations: Vec<String>) -> Result<RunConfig, ConfigError> {
    check_keys(&t, &mut violations);

    let given: Vec<&str> = SOURCES.iter().copied().filter(|s| t.contains_key(*s)).collect();
    match given.len() {
        0 => violations.push("one of [moments], [kernels] or [environment] is required".into()),
        1 => {}
        _ => violations.push(format!(
            "conflicting moment sources: {} are all given; provide exactly one",
            given.iter().map(|s| format!("[{s}]")).collect::<Vec<_>>().join(" and ")
        )),
    }

    let model = match section::<ModelSection>(&t, "model", &mut violations) {
        Some(m) => Some(ModelConfig {
            hbar: m.hbar,
            lambda1: m.lambda1,
            h_psi: m.h_psi,
            f2: m.f2,
            omega_c: m.omega_c,
        }),
        None => {
            if !t.contains_key("model") {
                violations.push("[model] is required".into());
            }
            None
        }
    };
    if let Some(m) = &model {
        positive(&mut violations, "model.hbar", m.hbar);
        if let Err(e) = m.validate() {
            violations.push(format!("[model]: {e}"));
        }
    }
    let dim = model.as_ref().map(|m| m.dim());

    let moments = section::<LocalMoments>(&t, "moments", &mut violations);
    if let Some(m) = &moments {
        validate_moments(m, &mut violations);
    }
    let kernels = section::<KernelsSection>(&t, "kernels", &mut violations);
    if let Some(k) = &kernels {
        if !k.dir.is_dir() {
            violations.push(format!("kernels.dir {} is not a directory", k.dir.display()));
        }
    }
    let environment = section::<EnvironmentSection>(&t, "environment", &mut violations);
    if let Some(e) = &environment {
        validate_environment(e, &mut violations);
    }

    let grid = section::<PhaseSpaceGrid>(&t, "grid", &mut violations);
    if let Some(g) = &grid {
        if let Err(e) = g.validate() {
            violations.push(format!("[grid]: {e}"));
        }
    }

    let initial = section::<InitialSection>(&t, "initial", &mut violations);
    if let Some(i) = &initial {
        validate_initial(i, dim, &mut violations);
    }

    let evolution = section::<EvolutionSection>(&t, "evolution", &mut violations);
    if let Some(e) = &evolution {
        validate_evolution(e, &mut violations);
    }

    let unravel = section::<UnravelSection>(&t, "unravel", &mut violations);
    if let Some(u) = &unravel {
        if u.trajectories < MIN_TRAJECTORIES {
            violations.push(format!("unravel.trajectories must be at least {MIN_TRAJECTORIES}"));
        }
        positive(&mut violations, "unravel.dt", u.dt);
        positive(&mut violations, "unravel.t_final", u.t_final);
        if u.output_stride == 0 {
            violations.push("unravel.output_stride must be at least 1".into());
        }
        let n = u.t_final / u.dt;
        if u.dt > 0.0 && (n - n.round()).abs() > 1e-6 * n.max(1.0) {
            violations.push("unravel.t_final must be an integer multiple of unravel.dt".into());
        }
    }

    let observables = match section::<Vec<ObservableSection>>(&t, "observables", &mut violations) {
        Some(list) => validate_observables(list, dim, &mut violations),
        None => Vec::new(),
    };
    let check_kernel = section::<CheckKernelSection>(&t, "check_kernel", &mut violations).unwrap_or_default();
    if check_kernel.points == Some(0) {
        violations.push("check_kernel.points must be at least 1".into());
    }

    if !violations.is_empty() {
        return Err(ConfigError::Invalid(violations));
    }
    let source = match (moments, kernels, environment) {
        (Some(m), None, None) => MomentSource::Moments(m),
        (None, Some(k), None) => MomentSource::Kernels(k.dir),
        (None, None, Some(e)) => MomentSource::Environment(e),
        _ => unreachable!("source count was validated"),
    };
    Ok(RunConfig {
        scenario: t.get("scenario").and_then(Value::as_str).map(str::to_string),
        model: model.expect("model was validated"),
        source,
        grid,
        initial,
        evolution,
        unravel,
        observables,
        check_kernel,
        resolved: t,
    })
}

fn validate_moments(m: &LocalMoments, violations: &mut Vec<String>) {
    let all = serde_json::to_value(m).expect("moments serialize");
    if let Some(obj) = all.as_object() {
        for (k, v) in obj {
            if !v.as_f64().is_some_and(f64::is_finite) {
                violations.push(format!("moments.{k} must be finite"));
            }
        }
    }
    for (name, v) in [("N22", m.n22), ("N33", m.n33), ("N22_2", m.n22_2), ("N33_2", m.n33_2)] {
        if v < 0.0 {
            violations.push(format!(
                "moments.{name} = {v} is negative; complete positivity requires {name} >= 0"
            ));
        }
    }
}

fn validate_environment(e: &EnvironmentSection, violations: &mut Vec<String>) {
    positive(violations, "environment.temperature", e.temperature);
    match e.correlator {
        CorrelatorName::ThermalMode => {
            match e.omega {
                Some(w) => positive(violations, "environment.omega", w),
                None => violations.push("environment.omega is required for a thermal_mode correlator".into()),
            }
            if !(e.linewidth >= 0.0) {
                violations.push(format!("environment.linewidth must be >= 0, got {}", e.linewidth));
            }
            if e.eta.is_some() || e.cutoff.is_some() {
                violations.push("environment.eta and environment.cutoff only apply to an ohmic correlator".into());
            }
        }
        CorrelatorName::Ohmic => {
            match e.eta {
                Some(x) => positive(violations, "environment.eta", x),
                None => violations.push("environment.eta is required for an ohmic correlator".into()),
            }
            match e.cutoff {
                Some(x) => positive(violations, "environment.cutoff", x),
                None => violations.push("environment.cutoff is required for an ohmic correlator".into()),
            }
            if e.omega.is_some() {
                violations.push("environment.omega only applies to a thermal_mode correlator".into());
            }
        }
    }
    for (name, v) in [("lambda2", e.lambda2), ("lambda3", e.lambda3)] {
        if !v.is_finite() {
            violations.push(format!("environment.{name} must be finite"));
        }
    }
    if let Some(w) = e.window {
        positive(violations, "environment.window", w);
    }
    if let Some(s) = e.step {
        positive(violations, "environment.step", s);
    }
}

fn validate_initial(i: &InitialSection, dim: Option<usize>, violations: &mut Vec<String>) {
    if i.shape == InitialShape::Gaussian {
        for (name, s) in [("sigma_h", i.sigma_h), ("sigma_pi", i.sigma_pi)] {
            match s {
                Some(s) => positive(violations, &format!("initial.{name}"), s),
                None => violations.push(format!("initial.{name} is required for a gaussian initial state")),
            }
        }
    }
    if let Some(d) = dim {
        if i.rho.dim() != d {
            violations.push(format!(
                "initial.rho has dimension {} but the model has {d}",
                i.rho.dim()
            ));
            return;
        }
    }
    if let Err(e) = i.rho.ensure_hermitian("initial.rho") {
        violations.push(e.to_string());
        return;
    }
    let tr = i.rho.trace();
    if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
        violations.push(format!("initial.rho must have unit trace, got {tr}"));
    }
    if let Ok(l) = min_eigenvalue(&i.rho) {
        if l < -1e-12 {
            violations.push(format!(
                "initial.rho must be positive semidefinite (min eigenvalue {l:.3e})"
            ));
        }
    }
}

fn validate_evolution(e: &EvolutionSection, violations: &mut Vec<String>) {
    positive(violations, "evolution.t_final", e.t_final);
    if let Some(dt) = e.dt {
        positive(violations, "evolution.dt", dt);
        let n = e.t_final / dt;
        if dt > 0.0 && (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            violations.push("evolution.t_final must be an integer multiple of evolution.dt".into());
        }
    }
    if e.output_stride == Some(0) || e.records == Some(0) {
        violations.push("evolution.output_stride and evolution.records must be at least 1".into());
    }
    if e.output_stride.is_some() && e.records.is_some() {
        violations.push("give at most one of evolution.output_stride and evolution.records".into());
    }
    for (name, v) in [
        ("boundary_threshold", e.boundary_threshold),
        ("trace_tolerance", e.trace_tolerance),
    ] {
        if let Some(v) = v {
            positive(violations, &format!("evolution.{name}"), v);
        }
    }
}

fn validate_observables(
    list: Vec<ObservableSection>,
    dim: Option<usize>,
    violations: &mut Vec<String>,
) -> Vec<Observable> {
    let mut out: Vec<Observable> = Vec::new();
    for (i, o) in list.into_iter().enumerate() {
        let valid_name = !o.name.is_empty()
            && o.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
            && !o.name.ends_with("_se");
        if !valid_name {
            violations.push(format!(
                "observables[{i}].name \"{}\" must be a nonempty identifier not ending in _se",
                o.name
            ));
        }
        if RESERVED_NAMES.contains(&o.name.as_str()) || out.iter().any(|p| p.name == o.name) {
            violations.push(format!(
                "observables[{i}].name \"{}\" is reserved or duplicated",
                o.name
            ));
        }
        if let Some(d) = dim {
            if o.op.dim() != d {
                violations.push(format!(
                    "observables[{i}] has dimension {} but the model has {d}",
                    o.op.dim()
                ));
            }
        }
        if let Err(e) = o.op.ensure_hermitian("observable") {
            violations.push(format!("observables[{i}]: {e}"));
        }
        out.push(Observable { name: o.name, op: o.op });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        parse_str(text, "test", Path::new("."))
    }

    fn violations(text: &str) -> Vec<String> {
        match parse(text) {
            Err(ConfigError::Invalid(v)) => v,
            other => panic!("expected validation errors, got {other:?}"),
        }
    }

    const MINIMAL: &str = r#"
        [model]
        lambda1 = 1.0
        h_psi = [[0.0, 0.5], [0.5, 0.0]]
        f2 = [[1.0, 0.0], [0.0, -1.0]]
        [moments]
        N22 = 0.25
        N33 = 0.25
    "#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.model.hbar, 1.0);
        assert_eq!(c.model.omega_c, 0.0);
        assert!(matches!(c.source, MomentSource::Moments(m) if m.n22 == 0.25 && m.d33 == 0.0));
        assert!(c.grid.is_none() && c.observables.is_empty());
    }

    #[test]
    fn every_preset_parses() {
        for name in presets::names() {
            let c = preset_config(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(c.scenario.as_deref(), Some(name));
        }
    }

    #[test]
    fn scenario_keys_can_be_overridden() {
        let c = parse("scenario = \"cubic-white\"\n[model]\nlambda1 = 0.5\n").unwrap();
        assert_eq!(c.model.lambda1, 0.5);
        assert_eq!(c.model.omega_c, 1.0);
        let c = parse("scenario = \"cubic-thermal\"\n[moments]\nN22 = 1.0\nN33 = 1.0\n").unwrap();
        assert!(matches!(c.source, MomentSource::Moments(_)));
    }

    #[test]
    fn conflicting_sources_are_reported() {
        let text = format!("{MINIMAL}\n[kernels]\ndir = \".\"\n");
        let v = violations(&text);
        assert!(v.iter().any(|s| s.contains("conflicting moment sources")), "{v:?}");
    }

    #[test]
    fn negative_n33_names_the_positivity_requirement() {
        let v = violations(&MINIMAL.replace("N33 = 0.25", "N33 = -0.1"));
        assert!(
            v.iter().any(|s| s.contains("N33") && s.contains("complete positivity")),
            "{v:?}"
        );
    }

    #[test]
    fn all_violations_are_collected() {
        let text = MINIMAL
            .replace("lambda1 = 1.0", "lambda1 = 1.0\nhbar = -1.0\nlamda2 = 3.0")
            .replace("N33 = 0.25", "N33 = -0.25\nN44 = 1.0")
            + "[grid]\nh_min = 1.0\nh_max = -1.0\nn_h = 32\npi_min = -1.0\npi_max = 1.0\nn_pi = 32\n";
        let v = violations(&text);
        assert!(v.iter().any(|s| s.contains("\"lamda2\"")), "{v:?}");
        assert!(v.iter().any(|s| s.contains("\"N44\"")), "{v:?}");
        assert!(v.iter().any(|s| s.contains("hbar")), "{v:?}");
        assert!(v.iter().any(|s| s.contains("[grid]")), "{v:?}");
        assert!(v.len() >= 4);
    }

    #[test]
    fn unknown_scenario_and_sections_are_errors() {
        let v = violations("scenario = \"nope\"\n[modle]\nx = 1\n");
        assert!(v.iter().any(|s| s.contains("unknown scenario")), "{v:?}");
        assert!(v.iter().any(|s| s.contains("\"modle\"")), "{v:?}");
    }

    #[test]
    fn missing_source_is_reported() {
        let text = MINIMAL.split("[moments]").next().unwrap();
        let v = violations(text);
        assert!(v.iter().any(|s| s.contains("one of [moments]")), "{v:?}");
    }

    #[test]
    fn complex_operator_form_is_accepted() {
        let text = MINIMAL.replace(
            "h_psi = [[0.0, 0.5], [0.5, 0.0]]",
            "h_psi = [[[0.0, 0.0], [0.0, -0.5]], [[0.0, 0.5], [0.0, 0.0]]]",
        );
        let c = parse(&text).unwrap();
        assert_eq!(c.model.h_psi.get(0, 1), C64::new(0.0, -0.5));
    }

    #[test]
    fn non_hermitian_observable_is_rejected() {
        let text = format!("{MINIMAL}\n[[observables]]\nname = \"x\"\nop = [[0.0, 1.0], [0.0, 0.0]]\n");
        let v = violations(&text);
        assert!(v.iter().any(|s| s.contains("observables[0]")), "{v:?}");
    }

    #[test]
    fn auto_dt_is_stable_and_divides_the_run() {
        let e = EvolutionSection {
            dt: None,
            t_final: 2.0,
            output_stride: None,
            records: Some(10),
            integrator: None,
            monitor_positivity: None,
            boundary_cells: None,
            boundary_threshold: None,
            trace_tolerance: None,
            hybrid_stencil: None,
        };
        let cfg = e.resolve(0.0123);
        assert!(cfg.dt <= 0.0123);
        assert_eq!(cfg.steps() % 10, 0);
        assert_eq!(cfg.output_stride * 10, cfg.steps());
        cfg.validate().unwrap();
    }

    #[test]
    fn canonical_text_is_order_independent() {
        let a = parse(MINIMAL).unwrap().canonical_toml();
        let reordered = "[moments]\nN33 = 0.25\nN22 = 0.25\n[model]\nf2 = [[1.0, 0.0], [0.0, -1.0]]\nh_psi = [[0.0, 0.5], [0.5, 0.0]]\nlambda1 = 1.0\n";
        assert_eq!(a, parse(reordered).unwrap().canonical_toml());
    }
}
