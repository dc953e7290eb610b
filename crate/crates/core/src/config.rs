//! TOML run configuration.
//!
//! ```toml
//! [system]
//! L = "sigma_minus"            # named operator or [[[re, im], …], …]
//! eta = "ground"               # or [[re, im], …]
//!
//! [field]
//! kind = "single_photon"       # vacuum | single_photon | cat
//! pulse = { family = "decaying_exponential", gamma = 1.0 }
//!
//! [run]
//! dt = 1e-3
//! t_end = 10.0
//!
//! [[observable]]
//! label = "n"
//! op = "excitation"
//! ```
//!
//! Parsing checks everything it can and reports all problems at once, each
//! tagged with the config path it refers to.

use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::integrate::Scheme;
use crate::model::{self, CoherentModes, ExtendedConfig, Grid, Mode, ModeSet, Pulse, PulseShape, SystemModel};
use crate::operators::{qubit, Operator};
use crate::series::{Observable, Stepping};

/// One problem found in a configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// `[re, im]`
pub type ComplexPair = [f64; 2];

fn to_c(p: &ComplexPair) -> Complex64 {
    Complex64::new(p[0], p[1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorSpec {
    /// `identity`, `zero`, or a qubit name (`sigma_x`, `sigma_minus`, `excitation`, …).
    Named(String),
    Matrix(Vec<Vec<ComplexPair>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    /// `ground` or `excited` (qubit only).
    Named(String),
    Vector(Vec<ComplexPair>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(rename = "S", default = "identity_spec")]
    pub s: OperatorSpec,
    #[serde(rename = "L")]
    pub l: OperatorSpec,
    #[serde(rename = "H", default = "zero_spec")]
    pub h: OperatorSpec,
    pub eta: VectorSpec,
}

fn identity_spec() -> OperatorSpec {
    OperatorSpec::Named("identity".into())
}

fn zero_spec() -> OperatorSpec {
    OperatorSpec::Named("zero".into())
}

/// Wave-packet profile: a built-in family or samples from a CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProfileSpec {
    DecayingExponential {
        gamma: f64,
    },
    RisingExponential {
        gamma: f64,
        end: f64,
    },
    Gaussian {
        center: f64,
        width: f64,
    },
    Constant {
        start: f64,
        end: f64,
    },
    /// CSV with header `t,re,im` on the field grid; `tail` is the norm
    /// beyond the last sample.
    Samples {
        path: String,
        #[serde(default)]
        tail: f64,
    },
}

impl ProfileSpec {
    fn shape(&self) -> Option<PulseShape> {
        Some(match *self {
            ProfileSpec::DecayingExponential { gamma } => PulseShape::DecayingExponential { gamma },
            ProfileSpec::RisingExponential { gamma, end } => PulseShape::RisingExponential { gamma, end },
            ProfileSpec::Gaussian { center, width } => PulseShape::Gaussian { center, width },
            ProfileSpec::Constant { start, end } => PulseShape::Constant { start, end },
            ProfileSpec::Samples { .. } => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub amplitude: ComplexPair,
    #[serde(flatten)]
    pub profile: ProfileSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSection {
    #[default]
    Vacuum,
    SinglePhoton {
        pulse: ProfileSpec,
        /// Field grid step; defaults to `[run].dt`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid_step: Option<f64>,
    },
    Cat {
        weights: Vec<ComplexPair>,
        modes: Vec<ModeSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid_step: Option<f64>,
        /// Rescale the weights to a unit-norm field state.
        #[serde(default)]
        normalize: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub seed: u64,
    /// Number of output intervals; every step when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<usize>,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    /// `coupled`, `extended` or `zakai`.
    #[serde(default = "default_formulation")]
    pub formulation: String,
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default)]
    pub keep_records: bool,
}

fn default_scheme() -> String {
    Scheme::EulerMaruyama.name().into()
}

fn default_formulation() -> String {
    Formulation::Coupled.name().into()
}

fn default_alpha0() -> f64 {
    std::f64::consts::FRAC_1_SQRT_2
}

fn default_trajectories() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableEntry {
    pub label: String,
    pub op: OperatorSpec,
}

/// The file as written, before validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub system: SystemSection,
    #[serde(default)]
    pub field: FieldSection,
    pub run: RunSection,
    #[serde(default, rename = "observable", skip_serializing_if = "Vec::is_empty")]
    pub observables: Vec<ObservableEntry>,
}

/// Which filter equations to integrate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Formulation {
    Coupled,
    Extended,
    Zakai,
}

impl Formulation {
    pub fn name(&self) -> &'static str {
        match self {
            Formulation::Coupled => "coupled",
            Formulation::Extended => "extended",
            Formulation::Zakai => "zakai",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "coupled" => Some(Formulation::Coupled),
            "extended" => Some(Formulation::Extended),
            "zakai" => Some(Formulation::Zakai),
            _ => None,
        }
    }
}

/// Validated field state.
#[derive(Clone, Debug, PartialEq)]
pub enum Field {
    /// Represented as a single photon that arrives after the horizon.
    Vacuum(Pulse),
    SinglePhoton(Pulse),
    Cat(CoherentModes),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSettings {
    pub stepping: Stepping,
    pub seed: u64,
    pub scheme: Scheme,
    pub formulation: Formulation,
    pub extended: ExtendedConfig,
    pub trajectories: usize,
    pub keep_records: bool,
}

/// A fully validated configuration. Equality compares canonical forms.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub file: ConfigFile,
    pub base_dir: PathBuf,
    pub model: SystemModel,
    pub field: Field,
    pub run: RunSettings,
    pub observables: Vec<Observable>,
    /// Contents of referenced sample files, in reference order.
    attachments: Vec<String>,
}

impl PartialEq for RunConfig {
    fn eq(&self, other: &Self) -> bool {
        self.file == other.file && self.attachments == other.attachments
    }
}

struct Issues(Vec<ConfigIssue>);

impl Issues {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(ConfigIssue {
            path: path.into(),
            message: message.into(),
        });
    }
}

fn named_operator(name: &str, dim: usize) -> std::result::Result<Operator, String> {
    match name {
        "identity" | "id" => Ok(Operator::identity(dim)),
        "zero" => Ok(Operator::zeros(dim)),
        _ => match qubit::by_name(name) {
            Some(op) if dim == 2 => Ok(op),
            Some(_) => Err(format!("`{name}` is a qubit operator but the system dimension is {dim}")),
            None => Err(format!("unknown operator name `{name}`")),
        },
    }
}

fn resolve_operator(spec: &OperatorSpec, dim: usize) -> std::result::Result<Operator, String> {
    match spec {
        OperatorSpec::Named(n) => named_operator(n, dim),
        OperatorSpec::Matrix(rows) => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(format!("matrix must be {dim}x{dim}"));
            }
            let rows: Vec<Vec<Complex64>> = rows.iter().map(|r| r.iter().map(to_c).collect()).collect();
            Operator::from_rows(&rows).map_err(|e| e.to_string())
        }
    }
}

fn resolve_vector(spec: &VectorSpec, dim: usize) -> std::result::Result<Vec<Complex64>, String> {
    match spec {
        VectorSpec::Named(n) => match (n.as_str(), dim) {
            ("ground", 2) => Ok(qubit::ground()),
            ("excited", 2) => Ok(qubit::excited()),
            ("ground" | "excited", _) => Err(format!("`{n}` needs a qubit, system dimension is {dim}")),
            _ => Err(format!("unknown state name `{n}`")),
        },
        VectorSpec::Vector(v) if v.len() == dim => Ok(v.iter().map(to_c).collect()),
        VectorSpec::Vector(v) => Err(format!("vector has {} entries, system dimension is {dim}", v.len())),
    }
}

/// Explicit `dim`, else the first matrix or vector, else 2 (named qubit).
fn infer_dim(sys: &SystemSection) -> usize {
    if let Some(d) = sys.dim {
        return d;
    }
    for op in [&sys.s, &sys.l, &sys.h] {
        if let OperatorSpec::Matrix(rows) = op {
            return rows.len();
        }
    }
    match &sys.eta {
        VectorSpec::Vector(v) => v.len(),
        VectorSpec::Named(_) => 2,
    }
}

/// Sampled rows `(t, values)`.
type SampleRows = Vec<(f64, Vec<Complex64>)>;

fn read_samples(path: &Path) -> Result<(String, SampleRows)> {
    let text = std::fs::read_to_string(path)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if vals.len() < 3 || vals.len().is_multiple_of(2) {
            return Err(Error::Parse(format!(
                "{}: expected t followed by (re, im) pairs, got {} values",
                path.display(),
                vals.len()
            )));
        }
        let z = vals[1..].chunks(2).map(|p| Complex64::new(p[0], p[1])).collect();
        rows.push((vals[0], z));
    }
    Ok((text, rows))
}

/// Sample columns on `grid`, checking the time column.
fn samples_on_grid(rows: &[(f64, Vec<Complex64>)], grid: Grid) -> std::result::Result<Vec<Vec<Complex64>>, String> {
    if rows.len() != grid.len() {
        return Err(format!("{} samples, field grid has {} nodes", rows.len(), grid.len()));
    }
    for (i, (t, _)) in rows.iter().enumerate() {
        if (t - grid.time(i)).abs() > 1e-9 * (1.0 + t.abs()) {
            return Err(format!("sample {i} at t = {t}, grid node is {}", grid.time(i)));
        }
    }
    let width = rows[0].1.len();
    if rows.iter().any(|r| r.1.len() != width) {
        return Err("rows have different numbers of columns".into());
    }
    Ok((0..width).map(|j| rows.iter().map(|r| r.1[j]).collect()).collect())
}

impl ConfigFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Defaults made explicit.
    pub fn canonical(&self) -> Self {
        let mut c = self.clone();
        if c.system.dim.is_none() {
            c.system.dim = Some(infer_dim(&c.system));
        }
        if c.observables.is_empty() {
            c.observables = default_observables(c.system.dim.unwrap_or(2));
        }
        let dt = c.run.dt;
        match &mut c.field {
            FieldSection::SinglePhoton { grid_step, .. } | FieldSection::Cat { grid_step, .. } => {
                grid_step.get_or_insert(dt);
            }
            FieldSection::Vacuum => {}
        }
        c
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn default_observables(dim: usize) -> Vec<ObservableEntry> {
    let entry = |label: &str, op: &str| ObservableEntry {
        label: label.into(),
        op: OperatorSpec::Named(op.into()),
    };
    if dim == 2 {
        vec![entry("n", "excitation"), entry("sp", "sigma_plus")]
    } else {
        vec![entry("id", "identity")]
    }
}

/// Reads and validates a configuration file; sample paths are resolved
/// relative to its directory.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config_str(&text, &base)
}

pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<RunConfig> {
    validate_config(ConfigFile::from_toml(text)?, base_dir)
}

pub fn validate_config(file: ConfigFile, base_dir: &Path) -> Result<RunConfig> {
    let file = file.canonical();
    let mut issues = Issues(Vec::new());
    let dim = file.system.dim.unwrap_or(2);
    if dim == 0 {
        issues.push("[system].dim", "must be at least 1");
        return Err(Error::Validation(issues.0));
    }

    // [system]
    let mut op = |name: &str, spec: &OperatorSpec| match resolve_operator(spec, dim) {
        Ok(o) => Some(o),
        Err(m) => {
            issues.push(format!("[system].{name}"), m);
            None
        }
    };
    let (s, l, h) = (op("S", &file.system.s), op("L", &file.system.l), op("H", &file.system.h));
    let eta = match resolve_vector(&file.system.eta, dim) {
        Ok(v) => Some(v),
        Err(m) => {
            issues.push("[system].eta", m);
            None
        }
    };
    let model = match (s, l, h, eta) {
        (Some(s), Some(l), Some(h), Some(eta)) => match SystemModel::from_parts(s, l, h, eta) {
            Ok(m) => match model::validate(&m) {
                Ok(()) => Some(m),
                Err(vs) => {
                    for v in vs {
                        issues.push(v.field(), v.to_string());
                    }
                    None
                }
            },
            Err(Error::Model(vs)) => {
                for v in vs {
                    issues.push(v.field(), v.to_string());
                }
                None
            }
            Err(e) => {
                issues.push("[system]", e.to_string());
                None
            }
        },
        _ => None,
    };

    // [run]
    let r = &file.run;
    let mut stepping = Some(Stepping::new(r.dt, r.t_end));
    if let Err(e) = Stepping::new(r.dt, r.t_end).steps() {
        issues.push("[run].dt", e.to_string());
        stepping = None;
    } else if let Some(n) = r.outputs {
        match Stepping::new(r.dt, r.t_end).with_outputs(n) {
            Ok(s) => stepping = Some(s),
            Err(e) => {
                issues.push("[run].outputs", e.to_string());
                stepping = None;
            }
        }
    }
    let scheme = Scheme::parse(&r.scheme);
    if scheme.is_none() {
        issues.push("[run].scheme", format!("unknown scheme `{}` (euler-maruyama | milstein)", r.scheme));
    }
    let formulation = Formulation::parse(&r.formulation);
    if formulation.is_none() {
        issues.push(
            "[run].formulation",
            format!("unknown formulation `{}` (coupled | extended | zakai)", r.formulation),
        );
    }
    let extended = ExtendedConfig::from_alpha0(r.alpha0)
        .map_err(|e| issues.push("[run].alpha0", e.to_string()))
        .ok();
    if r.trajectories < 2 {
        issues.push("[run].trajectories", "an ensemble needs at least 2 trajectories");
    }

    // [field]
    let mut attachments = Vec::new();
    let field = resolve_field(&file, base_dir, &mut issues, &mut attachments);
    if let (Some(Field::Cat(_)), Some(Formulation::Zakai)) = (&field, formulation) {
        issues.push(
            "[run].formulation",
            "the unnormalized filter is only defined for single-photon fields",
        );
    }

    // [[observable]]
    let mut observables = Vec::new();
    for (i, o) in file.observables.iter().enumerate() {
        if file.observables[..i].iter().any(|p| p.label == o.label) {
            issues.push(format!("[[observable]][{i}].label"), format!("duplicate label `{}`", o.label));
        }
        if o.label.is_empty() || o.label.contains([',', '"', '\n']) {
            issues.push(
                format!("[[observable]][{i}].label"),
                "labels must be non-empty without commas or quotes",
            );
        }
        match resolve_operator(&o.op, dim) {
            Ok(op) => observables.push(Observable::new(o.label.clone(), op)),
            Err(m) => issues.push(format!("[[observable]][{i}].op"), m),
        }
    }

    if !issues.0.is_empty() {
        return Err(Error::Validation(issues.0));
    }
    let (Some(model), Some(field), Some(stepping), Some(scheme), Some(formulation), Some(extended)) =
        (model, field, stepping, scheme, formulation, extended)
    else {
        unreachable!("every missing piece records an issue");
    };
    Ok(RunConfig {
        run: RunSettings {
            stepping,
            seed: r.seed,
            scheme,
            formulation,
            extended,
            trajectories: r.trajectories,
            keep_records: r.keep_records,
        },
        file,
        base_dir: base_dir.to_path_buf(),
        model,
        field,
        observables,
        attachments,
    })
}

fn resolve_field(file: &ConfigFile, base_dir: &Path, issues: &mut Issues, attachments: &mut Vec<String>) -> Option<Field> {
    let t_end = file.run.t_end;
    let grid_for = |step: Option<f64>, issues: &mut Issues| {
        let step = step.unwrap_or(file.run.dt);
        let g = Grid::new(step, t_end)
            .map_err(|e| issues.push("[field].grid_step", e.to_string()))
            .ok()?;
        model::steps_for(t_end, step)
            .map_err(|e| issues.push("[field].grid_step", e.to_string()))
            .ok()?;
        Some(g)
    };
    match &file.field {
        FieldSection::Vacuum => {
            let grid = Grid::new(t_end, t_end)
                .map_err(|e| issues.push("[run].t_end", e.to_string()))
                .ok()?;
            Some(Field::Vacuum(Pulse::vacuum(grid)))
        }
        FieldSection::SinglePhoton { pulse, grid_step } => {
            let grid = grid_for(*grid_step, issues)?;
            let built = match pulse.shape() {
                Some(shape) => Pulse::from_shape(shape, grid),
                None => {
                    let ProfileSpec::Samples { path, tail } = pulse else {
                        unreachable!()
                    };
                    let (text, rows) = match read_samples(&base_dir.join(path)) {
                        Ok(x) => x,
                        Err(e) => {
                            issues.push("[field].pulse.path", e.to_string());
                            return None;
                        }
                    };
                    attachments.push(text);
                    match samples_on_grid(&rows, grid) {
                        Ok(cols) if cols.len() == 1 => Pulse::from_samples(grid, cols.into_iter().next().unwrap(), *tail),
                        Ok(cols) => Err(Error::Field(format!("pulse file has {} profiles, expected 1", cols.len()))),
                        Err(m) => Err(Error::Field(m)),
                    }
                }
            };
            built
                .map(Field::SinglePhoton)
                .map_err(|e| issues.push("[field].pulse", e.to_string()))
                .ok()
        }
        FieldSection::Cat {
            weights,
            modes,
            grid_step,
            normalize,
        } => {
            let grid = grid_for(*grid_step, issues)?;
            if modes.is_empty() {
                issues.push("[field].modes", "at least one mode is required");
                return None;
            }
            if weights.len() != modes.len() {
                issues.push("[field].weights", format!("{} weights for {} modes", weights.len(), modes.len()));
                return None;
            }
            let set = if modes.iter().all(|m| m.profile.shape().is_some()) {
                let built: Vec<Mode> = modes
                    .iter()
                    .map(|m| Mode {
                        amplitude: to_c(&m.amplitude),
                        shape: m.profile.shape().unwrap(),
                    })
                    .collect();
                ModeSet::from_modes(built, grid)
            } else {
                // Mixed or sampled profiles: sample everything on the grid.
                let mut cols = Vec::new();
                let mut tails = Vec::new();
                for (i, m) in modes.iter().enumerate() {
                    let a = to_c(&m.amplitude);
                    match (&m.profile, m.profile.shape()) {
                        (_, Some(shape)) => {
                            cols.push((0..grid.len()).map(|k| a * shape.value(grid.time(k))).collect());
                            tails.push(a.norm_sqr() * shape.tail(t_end));
                        }
                        (ProfileSpec::Samples { path, tail }, None) => {
                            let parsed = read_samples(&base_dir.join(path))
                                .map_err(|e| e.to_string())
                                .and_then(|(text, rows)| {
                                    attachments.push(text);
                                    samples_on_grid(&rows, grid)
                                });
                            match parsed {
                                Ok(c) if c.len() == 1 => {
                                    cols.push(c[0].iter().map(|z| a * z).collect());
                                    tails.push(a.norm_sqr() * tail);
                                }
                                Ok(c) => issues.push(
                                    format!("[field].modes[{i}].path"),
                                    format!("expected one profile, found {}", c.len()),
                                ),
                                Err(m) => issues.push(format!("[field].modes[{i}].path"), m),
                            }
                        }
                        _ => unreachable!(),
                    }
                }
                if cols.len() != modes.len() {
                    return None;
                }
                if tails.iter().any(|&t| t > 0.0) {
                    issues.push(
                        "[field].modes",
                        "sampled superposition modes must vanish beyond t_end (cross-mode tails are unknown)",
                    );
                    return None;
                }
                ModeSet::from_samples(grid, cols, None)
            };
            let set = set.map_err(|e| issues.push("[field].modes", e.to_string())).ok()?;
            let w: Vec<Complex64> = weights.iter().map(to_c).collect();
            let cm = if *normalize {
                CoherentModes::normalized(set, w)
            } else {
                CoherentModes::new(set, w)
            };
            cm.map(Field::Cat).map_err(|e| issues.push("[field].weights", e.to_string())).ok()
        }
    }
}

impl RunConfig {
    /// Canonical TOML: every default written out.
    pub fn canonical_toml(&self) -> Result<String> {
        self.file.to_toml()
    }

    /// SHA-256 over the canonical text and referenced sample files.
    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(self.canonical_toml()?.as_bytes());
        for a in &self.attachments {
            h.update([0u8]);
            h.update(a.as_bytes());
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Applies a `--seed` override.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.file.run.seed = seed;
        self.run.seed = seed;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[system]
L = "sigma_minus"
eta = "excited"

[run]
dt = 0.01
t_end = 1.0
"#;

    #[test]
    fn minimal_vacuum_config_gets_defaults() {
        let cfg = parse_config_str(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(cfg.model.dim(), 2);
        assert!(matches!(cfg.field, Field::Vacuum(_)));
        assert_eq!(cfg.run.scheme, Scheme::EulerMaruyama);
        assert_eq!(cfg.run.formulation, Formulation::Coupled);
        assert_eq!(cfg.run.seed, 0);
        assert_eq!(cfg.run.stepping.steps().unwrap(), 100);
        let labels: Vec<_> = cfg.observables.iter().map(|o| o.label.as_str()).collect();
        assert_eq!(labels, ["n", "sp"]);
    }

    #[test]
    fn non_unitary_s_is_named() {
        let text = MINIMAL.replace("L = ", "S = [[[2.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]\nL = ");
        let Err(Error::Validation(issues)) = parse_config_str(&text, Path::new(".")) else {
            panic!("expected validation error");
        };
        assert!(issues.iter().any(|i| i.path == "[system].S"), "{issues:?}");
    }

    #[test]
    fn all_violations_are_listed() {
        let text = r#"
[system]
L = "sigma_minus"
H = [[[0.0, 0.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]
eta = [[1.0, 0.0], [1.0, 0.0]]

[run]
dt = 0.03
t_end = 1.0
scheme = "rk4"
alpha0 = 2.0

[[observable]]
label = "x"
op = "bogus"
"#;
        let Err(Error::Validation(issues)) = parse_config_str(text, Path::new(".")) else {
            panic!("expected validation error");
        };
        let paths: Vec<_> = issues.iter().map(|i| i.path.as_str()).collect();
        for p in [
            "[system].H",
            "[system].eta",
            "[run].dt",
            "[run].scheme",
            "[run].alpha0",
            "[[observable]][0].op",
        ] {
            assert!(paths.contains(&p), "missing {p} in {paths:?}");
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        let Err(Error::Parse(msg)) = parse_config_str("[system\nL = 1", Path::new(".")) else {
            panic!("expected parse error");
        };
        assert!(msg.contains("line"), "{msg}");
        let Err(Error::Parse(msg)) = parse_config_str(&MINIMAL.replace("t_end", "t_ned"), Path::new(".")) else {
            panic!("expected parse error");
        };
        assert!(msg.contains("t_ned"), "{msg}");
    }

    #[test]
    fn canonical_round_trip() {
        let text = r#"
[system]
L = "sigma_minus"
eta = "ground"

[field]
kind = "cat"
weights = [[1.0, 0.0], [1.0, 0.0]]
normalize = true
modes = [
  { amplitude = [0.5, 0.0], family = "decaying_exponential", gamma = 1.0 },
  { amplitude = [-0.5, 0.0], family = "decaying_exponential", gamma = 1.0 },
]

[run]
dt = 0.01
t_end = 2.0
outputs = 20
scheme = "milstein"
"#;
        let a = parse_config_str(text, Path::new(".")).unwrap();
        let canon = a.canonical_toml().unwrap();
        let b = parse_config_str(&canon, Path::new(".")).unwrap();
        assert_eq!(a, b);
        assert_eq!(canon, b.canonical_toml().unwrap());
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        assert_ne!(a.hash().unwrap(), a.clone().with_seed(9).hash().unwrap());
    }

    #[test]
    fn sampled_pulse_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::new(0.001, 2.0).unwrap();
        let shape = PulseShape::DecayingExponential { gamma: 1.0 };
        let mut csv = String::from("t,re,im\n");
        for i in 0..grid.len() {
            csv += &format!("{},{},0\n", grid.time(i), shape.value(grid.time(i)));
        }
        std::fs::write(dir.path().join("xi.csv"), csv).unwrap();
        let text = format!(
            "{MINIMAL}\n[field]\nkind = \"single_photon\"\ngrid_step = 0.001\npulse = {{ family = \"samples\", path = \"xi.csv\", tail = {} }}\n",
            shape.tail(2.0)
        )
        .replace("t_end = 1.0", "t_end = 2.0");
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(&cfg_path, text).unwrap();
        let cfg = parse_config(&cfg_path).unwrap();
        let Field::SinglePhoton(p) = &cfg.field else { panic!() };
        assert!((p.value(0.5).re - shape.value(0.5)).abs() < 1e-3);
        let other = tempfile::tempdir().unwrap();
        std::fs::copy(&cfg_path, other.path().join("run.toml")).unwrap();
        let Err(Error::Validation(issues)) = parse_config(&other.path().join("run.toml")) else {
            panic!("missing sample file must be reported");
        };
        assert_eq!(issues[0].path, "[field].pulse.path");
    }
}
