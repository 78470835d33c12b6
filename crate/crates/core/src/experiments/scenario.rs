//! Scenario files: a TOML key/section format, schema checks with
//! nearest-key hints, defaults, and the per-ħ resolution validator.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classical::{InitialAction, LinearChirpAction};
use crate::coherent::CoherentState;
use crate::grid::{Grid, Point};
use crate::potentials::{DoubleSlit, PotentialKind, PotentialSpec};
use crate::solver::aliasing_limit;

/// Grid points required per de Broglie wavelength `2πħ / (m v_max)`.
pub const POINTS_PER_WAVELENGTH: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("{0}")]
    Parse(String),
    #[error("unknown key `{key}`{}{}", line_suffix(*.line), hint_suffix(.hint))]
    UnknownKey { key: String, line: Option<usize>, hint: Option<String> },
    #[error("missing required key `{key}`{}", line_suffix(*.line))]
    MissingKey { key: String, line: Option<usize> },
    #[error("invalid value for `{key}`{}: {message}", line_suffix(*.line))]
    InvalidValue { key: String, line: Option<usize>, message: String },
    #[error("invalid override `{0}`: expected key=value")]
    Override(String),
    #[error(
        "hbar = {hbar} (divisor {divisor}) is under-resolved on axis {axis}: {points} points, need at least {required} \
         ({POINTS_PER_WAVELENGTH} per wavelength {wavelength:.4e})"
    )]
    Resolution { hbar: f64, divisor: f64, axis: usize, points: usize, required: usize, wavelength: f64 },
    #[error("statistical scenarios need hbar-independent rho0 and S0; the [coherent] section scales with hbar")]
    HbarDependentInitial,
}

fn line_suffix(line: Option<usize>) -> String {
    line.map(|l| format!(" (line {l})")).unwrap_or_default()
}

fn hint_suffix(hint: &Option<String>) -> String {
    hint.as_ref().map(|h| format!("; did you mean `{h}`?")).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Statistical,
    Determinist,
    DoubleSlit,
}

// ---------------------------------------------------------------- file form

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_position: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_thickness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slit_separation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slit_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub center: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chirp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CoherentSection {
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct HbarSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divisors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub t_final: f64,
    pub output_interval: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorber_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorber_strength: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ParticlesSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spin: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_region: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minplus_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_refine: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equivariance_times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bump_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_clusters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_written_particles: Option<usize>,
}

/// The scenario file as written (and, after [`ScenarioFile::resolve`],
/// echoed with every default filled in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub kind: String,
    pub units: String,
    pub seed: u64,
    pub grid: GridSection,
    pub potential: PotentialSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coherent: Option<CoherentSection>,
    #[serde(default)]
    pub hbar: HbarSection,
    pub solver: SolverSection,
    #[serde(default)]
    pub particles: ParticlesSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Copy, PartialEq)]
enum Need {
    Required,
    Optional,
}

#[derive(Clone, Copy, PartialEq)]
enum Shape {
    Scalar,
    List,
}

use Need::*;
use Shape::*;

type KeySpec = (&'static str, Need, Shape);

const TOP: &[KeySpec] = &[("name", Required, Scalar), ("kind", Required, Scalar), ("units", Required, Scalar), ("seed", Required, Scalar)];

const SECTIONS: &[(&str, Need, &[KeySpec])] = &[
    ("grid", Required, &[("dim", Required, Scalar), ("extent", Optional, List), ("points", Optional, List)]),
    (
        "potential",
        Required,
        &[
            ("kind", Required, Scalar),
            ("mass", Optional, Scalar),
            ("force", Optional, List),
            ("omega", Optional, Scalar),
            ("wall_position", Optional, Scalar),
            ("wall_thickness", Optional, Scalar),
            ("slit_separation", Optional, Scalar),
            ("slit_width", Optional, Scalar),
            ("height", Optional, Scalar),
            ("edge_width", Optional, Scalar),
        ],
    ),
    (
        "initial",
        Optional,
        &[("center", Required, List), ("sigma", Required, List), ("velocity", Optional, List), ("chirp", Optional, Scalar)],
    ),
    ("coherent", Optional, &[("x0", Required, List), ("v0", Required, List)]),
    ("hbar", Optional, &[("base", Optional, Scalar), ("divisors", Optional, List)]),
    (
        "solver",
        Required,
        &[
            ("t_final", Required, Scalar),
            ("output_interval", Required, Scalar),
            ("max_dt", Optional, Scalar),
            ("absorber_width", Optional, Scalar),
            ("absorber_strength", Optional, Scalar),
        ],
    ),
    (
        "particles",
        Optional,
        &[("count", Optional, Scalar), ("density_samples", Optional, Scalar), ("substeps", Optional, Scalar), ("spin", Optional, Scalar)],
    ),
    (
        "analysis",
        Optional,
        &[
            ("rho_floor", Optional, Scalar),
            ("action_floor", Optional, Scalar),
            ("residual_floor", Optional, Scalar),
            ("action_region", Optional, Scalar),
            ("bin_cells", Optional, Scalar),
            ("minplus_points", Optional, Scalar),
            ("search_refine", Optional, Scalar),
            ("sample_times", Optional, List),
            ("equivariance_times", Optional, List),
            ("window", Optional, Scalar),
            ("bump_width", Optional, Scalar),
            ("max_clusters", Optional, Scalar),
        ],
    ),
    ("output", Optional, &[("fields", Optional, Scalar), ("trajectories", Optional, Scalar), ("max_written_particles", Optional, Scalar)]),
];

fn all_key_paths() -> Vec<String> {
    let mut out: Vec<String> = TOP.iter().map(|k| k.0.to_string()).collect();
    for (section, _, keys) in SECTIONS {
        out.push(section.to_string());
        out.extend(keys.iter().map(|k| format!("{section}.{}", k.0)));
    }
    out
}

fn nearest(path: &str) -> Option<String> {
    all_key_paths()
        .into_iter()
        .map(|k| (strsim::jaro_winkler(path, &k), k))
        .filter(|(s, _)| *s > 0.75)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, k)| k)
}

/// 1-based line of `key` inside `[section]` (or before any section header
/// when `section` is empty).
fn line_of(source: &str, section: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    for (n, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            if key.is_none() && current == section {
                return Some(n + 1);
            }
            continue;
        }
        if let Some(k) = key {
            if current == section {
                if let Some((lhs, _)) = line.split_once('=') {
                    if lhs.trim() == k {
                        return Some(n + 1);
                    }
                }
            }
        }
    }
    None
}

fn lookup_shape(section: &str, key: &str) -> Option<Shape> {
    if section.is_empty() {
        return TOP.iter().find(|k| k.0 == key).map(|k| k.2);
    }
    SECTIONS.iter().find(|s| s.0 == section)?.2.iter().find(|k| k.0 == key).map(|k| k.2)
}

/// Splits an override key written as `section.key` or `section_key`.
fn split_override_key(key: &str) -> Option<(String, String)> {
    if let Some((s, k)) = key.split_once('.') {
        return lookup_shape(s, k).map(|_| (s.to_string(), k.to_string()));
    }
    if lookup_shape("", key).is_some() {
        return Some((String::new(), key.to_string()));
    }
    for (section, _, _) in SECTIONS {
        if let Some(k) = key.strip_prefix(section).and_then(|r| r.strip_prefix('_')) {
            if lookup_shape(section, k).is_some() {
                return Some((section.to_string(), k.to_string()));
            }
        }
    }
    None
}

fn parse_override_value(raw: &str, shape: Shape) -> Result<toml::Value, ScenarioError> {
    let text = raw.trim();
    let text = if shape == List && !text.starts_with('[') { format!("[{text}]") } else { text.to_string() };
    let parsed: Result<toml::Table, _> = toml::from_str(&format!("v = {text}"));
    match parsed {
        Ok(mut t) => Ok(t.remove("v").expect("value present")),
        // bare words become strings
        Err(_) => Ok(toml::Value::String(raw.trim().to_string())),
    }
}

/// Applies one `key=value` override to a parsed table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ScenarioError> {
    let (key, value) = assignment.split_once('=').ok_or_else(|| ScenarioError::Override(assignment.to_string()))?;
    let key = key.trim();
    let (section, name) = split_override_key(key).ok_or_else(|| ScenarioError::UnknownKey {
        key: key.to_string(),
        line: None,
        hint: nearest(&key.replacen('_', ".", 1)).or_else(|| nearest(key)),
    })?;
    let shape = lookup_shape(&section, &name).expect("checked above");
    let value = parse_override_value(value, shape)?;
    let target = if section.is_empty() {
        table
    } else {
        table
            .entry(section.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| ScenarioError::InvalidValue { key: section.clone(), line: None, message: "expected a section".into() })?
    };
    target.insert(name, value);
    Ok(())
}

fn check_schema(table: &toml::Table, source: &str) -> Result<(), ScenarioError> {
    for (key, value) in table {
        if let Some(spec) = SECTIONS.iter().find(|s| s.0 == key) {
            let Some(inner) = value.as_table() else {
                return Err(ScenarioError::InvalidValue {
                    key: key.clone(),
                    line: line_of(source, "", Some(key)),
                    message: "expected a [section]".into(),
                });
            };
            for k in inner.keys() {
                if !spec.2.iter().any(|s| s.0 == k) {
                    let path = format!("{key}.{k}");
                    return Err(ScenarioError::UnknownKey { hint: nearest(&path), line: line_of(source, key, Some(k)), key: path });
                }
            }
        } else if !TOP.iter().any(|s| s.0 == key) {
            return Err(ScenarioError::UnknownKey { hint: nearest(key), line: line_of(source, "", Some(key)), key: key.clone() });
        }
    }
    for k in TOP {
        if k.1 == Required && !table.contains_key(k.0) {
            return Err(ScenarioError::MissingKey { key: k.0.to_string(), line: None });
        }
    }
    for (section, need, keys) in SECTIONS {
        match table.get(*section).and_then(|v| v.as_table()) {
            None if *need == Required => return Err(ScenarioError::MissingKey { key: format!("[{section}]"), line: None }),
            None => {}
            Some(inner) => {
                for k in keys.iter().filter(|k| k.1 == Required) {
                    if !inner.contains_key(k.0) {
                        return Err(ScenarioError::MissingKey {
                            key: format!("{section}.{}", k.0),
                            line: line_of(source, section, None),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

impl ScenarioFile {
    /// Parses TOML text, applies `overrides` (`key=value`), checks the schema
    /// and resolves defaults.
    pub fn parse(source: &str, overrides: &[String]) -> Result<Self, ScenarioError> {
        let mut table: toml::Table = toml::from_str(source).map_err(|e| ScenarioError::Parse(e.to_string().trim_end().to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        check_schema(&table, source)?;
        let file: ScenarioFile = toml::Value::Table(table.clone()).try_into().map_err(|e: toml::de::Error| {
            ScenarioError::Parse(e.message().to_string())
        })?;
        file.resolve(source)
    }

    fn invalid(&self, source: &str, section: &str, key: &str, message: impl Into<String>) -> ScenarioError {
        let path = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        ScenarioError::InvalidValue { key: path, line: line_of(source, section, Some(key)), message: message.into() }
    }

    /// Fills defaults and checks value ranges.
    fn resolve(mut self, source: &str) -> Result<Self, ScenarioError> {
        if self.units != "natural" {
            return Err(self.invalid(source, "", "units", "only \"natural\" units (ħ, m, lengths as plain numbers) are supported"));
        }
        let kind = match self.kind.as_str() {
            "statistical" => ScenarioKind::Statistical,
            "determinist" => ScenarioKind::Determinist,
            "double_slit" => ScenarioKind::DoubleSlit,
            other => return Err(self.invalid(source, "", "kind", format!("`{other}`; expected statistical, determinist or double_slit"))),
        };
        let dim = self.grid.dim;
        if dim != 1 && dim != 2 {
            return Err(self.invalid(source, "grid", "dim", "must be 1 or 2"));
        }
        let list_ok = |v: &Option<Vec<f64>>| v.as_ref().is_none_or(|v| v.len() == dim);
        if !list_ok(&self.grid.extent) {
            return Err(self.invalid(source, "grid", "extent", format!("needs {dim} entries")));
        }
        if let Some(p) = &self.grid.points {
            if p.len() != dim || p.iter().any(|n| *n < crate::grid::MIN_POINTS || n % 2 == 1) {
                return Err(self.invalid(source, "grid", "points", format!("needs {dim} even entries ≥ {}", crate::grid::MIN_POINTS)));
            }
        }
        if self.grid.extent.is_none() && kind != ScenarioKind::Determinist {
            return Err(ScenarioError::MissingKey { key: "grid.extent".into(), line: line_of(source, "grid", None) });
        }
        if self.grid.points.is_some() && self.grid.extent.is_none() {
            return Err(ScenarioError::MissingKey { key: "grid.extent".into(), line: line_of(source, "grid", None) });
        }

        self.potential.mass.get_or_insert(1.0);
        match (kind, self.potential.kind.as_str()) {
            (ScenarioKind::Determinist, "harmonic") => {}
            (ScenarioKind::Determinist, other) => {
                return Err(self.invalid(source, "potential", "kind", format!("determinist scenarios need `harmonic`, got `{other}`")))
            }
            (ScenarioKind::DoubleSlit, "double_slit") => {}
            (ScenarioKind::DoubleSlit, other) => {
                return Err(self.invalid(source, "potential", "kind", format!("double_slit scenarios need `double_slit`, got `{other}`")))
            }
            (ScenarioKind::Statistical, "free" | "linear" | "harmonic") => {}
            (_, other) => {
                return Err(self.invalid(source, "potential", "kind", format!("`{other}`; expected free, linear or harmonic")))
            }
        }

        match kind {
            ScenarioKind::Determinist => {
                if self.coherent.is_none() {
                    return Err(ScenarioError::MissingKey { key: "[coherent]".into(), line: None });
                }
            }
            _ => {
                if self.coherent.is_some() {
                    return Err(ScenarioError::HbarDependentInitial);
                }
                let Some(init) = self.initial.as_mut() else {
                    return Err(ScenarioError::MissingKey { key: "[initial]".into(), line: None });
                };
                init.velocity.get_or_insert(vec![0.0; dim]);
                init.chirp.get_or_insert(0.0);
            }
        }
        if let Some(c) = &self.coherent {
            if c.x0.len() != dim || c.v0.len() != dim {
                return Err(self.invalid(source, "coherent", "x0", format!("x0 and v0 need {dim} entries")));
            }
        }
        if let Some(init) = &self.initial {
            if init.center.len() != dim || init.sigma.len() != dim || init.velocity.as_ref().is_some_and(|v| v.len() != dim) {
                return Err(self.invalid(source, "initial", "center", format!("center, sigma and velocity need {dim} entries")));
            }
            if init.sigma.iter().any(|s| !(*s > 0.0)) {
                return Err(self.invalid(source, "initial", "sigma", "must be positive"));
            }
            if init.chirp.unwrap_or(0.0) < 0.0 {
                return Err(self.invalid(source, "initial", "chirp", "a focusing chirp forms a caustic; use chirp ≥ 0"));
            }
        }

        let default_divisors = match kind {
            ScenarioKind::Statistical => vec![1.0, 10.0, 100.0, 1000.0],
            ScenarioKind::Determinist => vec![1.0, 10.0, 100.0],
            ScenarioKind::DoubleSlit => vec![1.0],
        };
        self.hbar.divisors.get_or_insert(default_divisors);
        if self.hbar.divisors.as_ref().is_some_and(|d| d.is_empty() || d.iter().any(|v| !(*v > 0.0))) {
            return Err(self.invalid(source, "hbar", "divisors", "needs at least one positive entry"));
        }
        if self.hbar.base.is_none() {
            let base = self.default_hbar_base().ok_or_else(|| ScenarioError::MissingKey {
                key: "hbar.base (no velocity scale to size it from)".into(),
                line: line_of(source, "hbar", None),
            })?;
            self.hbar.base = Some(base);
        }

        let s = &mut self.solver;
        s.absorber_width.get_or_insert(0.0);
        s.absorber_strength.get_or_insert(0.0);
        if !(s.t_final > 0.0) {
            return Err(self.invalid(source, "solver", "t_final", "must be positive"));
        }
        let s = &self.solver;
        let count = (s.t_final / s.output_interval).round();
        if !(s.output_interval > 0.0) || count < 1.0 || (count * s.output_interval - s.t_final).abs() > 1e-9 * s.t_final {
            return Err(self.invalid(source, "solver", "output_interval", "must divide t_final"));
        }

        let p = &mut self.particles;
        p.count.get_or_insert(100);
        p.density_samples.get_or_insert(if kind == ScenarioKind::Statistical { 1_000_000 } else { 0 });
        p.substeps.get_or_insert(4);
        p.spin.get_or_insert(false);
        if self.particles.spin == Some(true) && dim != 2 {
            return Err(self.invalid(source, "particles", "spin", "the spin term needs a 2D grid"));
        }

        let t_final = self.solver.t_final;
        let a = &mut self.analysis;
        a.rho_floor.get_or_insert(1e-12);
        a.action_floor.get_or_insert(1e-10);
        a.residual_floor.get_or_insert(1e-8);
        a.action_region.get_or_insert(1e-6);
        a.bin_cells.get_or_insert(4);
        a.minplus_points.get_or_insert(if dim == 1 { 1024 } else { 64 });
        a.search_refine.get_or_insert(if dim == 1 { 2 } else { 1 });
        a.sample_times.get_or_insert(vec![t_final]);
        let interval = self.solver.output_interval;
        // midpoint snapped to the output lattice
        let mid = (0.5 * t_final / interval).round() * interval;
        a.equivariance_times.get_or_insert(vec![0.0, mid, t_final]);
        a.window.get_or_insert(0.25);
        a.bump_width.get_or_insert(1.5);
        a.max_clusters.get_or_insert(8);
        for (key, times) in [("sample_times", &self.analysis.sample_times), ("equivariance_times", &self.analysis.equivariance_times)] {
            for t in times.as_ref().expect("defaulted") {
                let k = (t / interval).round();
                if *t < 0.0 || *t > t_final * (1.0 + 1e-12) || (k * interval - t).abs() > 1e-9 * t_final {
                    return Err(self.invalid(source, "analysis", key, format!("{t} is not an output time (multiples of {interval})")));
                }
            }
        }

        let o = &mut self.output;
        o.fields.get_or_insert(true);
        o.trajectories.get_or_insert(true);
        o.max_written_particles.get_or_insert(200);

        // Build once so malformed physics parameters surface here.
        Scenario::build(self.clone(), kind).map_err(|e| match e {
            ScenarioError::InvalidValue { key, message, .. } => {
                let (section, k) = key.split_once('.').unwrap_or(("", key.as_str()));
                ScenarioError::InvalidValue { line: line_of(source, section, Some(k)), key, message }
            }
            other => other,
        })?;
        Ok(self)
    }

    /// Base ħ at which the packet spans about 20 de Broglie wavelengths.
    fn default_hbar_base(&self) -> Option<f64> {
        let m = self.potential.mass.unwrap_or(1.0);
        let (span, speed) = if let Some(c) = &self.coherent {
            let omega = self.potential.omega?;
            let amp = (dot_list(&c.x0, &c.x0) + dot_list(&c.v0, &c.v0) / (omega * omega)).sqrt();
            (2.0 * amp, (dot_list(&c.v0, &c.v0) + omega * omega * dot_list(&c.x0, &c.x0)).sqrt())
        } else {
            let init = self.initial.as_ref()?;
            let v = init.velocity.clone().unwrap_or_default();
            let sigma = init.sigma.iter().copied().fold(0.0, f64::max);
            (4.0 * sigma, dot_list(&v, &v).sqrt() + init.chirp.unwrap_or(0.0) * 2.0 * sigma / m)
        };
        if !(speed > 0.0 && span > 0.0) {
            return None;
        }
        // span = 20 λ, λ = 2πħ / (m v)
        Some(span * m * speed / (20.0 * 2.0 * PI))
    }
}

fn dot_list(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn point(v: &[f64]) -> Point {
    [v.first().copied().unwrap_or(0.0), v.get(1).copied().unwrap_or(0.0)]
}

// ---------------------------------------------------------------- typed form

/// ħ-independent Gaussian `ρ0` with a linear-plus-chirp `S0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketSpec {
    pub center: Point,
    pub sigma: Point,
    pub action: LinearChirpAction,
}

impl PacketSpec {
    pub fn density(&self, dim: usize, x: Point) -> f64 {
        let mut v = 1.0;
        for a in 0..dim {
            let s = self.sigma[a];
            v *= (-(x[a] - self.center[a]).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt());
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Packet(PacketSpec),
    Coherent { x0: Point, v0: Point },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisSpec {
    pub rho_floor: f64,
    pub action_floor: f64,
    pub residual_floor: f64,
    pub action_region: f64,
    pub bin_cells: usize,
    pub minplus_points: usize,
    pub search_refine: usize,
    pub window: f64,
    pub bump_width: f64,
    pub max_clusters: usize,
}

/// Fully resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub name: String,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub dim: usize,
    pub extent: Option<Vec<f64>>,
    pub points: Option<Vec<usize>>,
    pub potential: PotentialSpec,
    pub initial: InitialState,
    pub hbar_base: f64,
    pub divisors: Vec<f64>,
    pub t_final: f64,
    pub output_interval: f64,
    pub max_dt: Option<f64>,
    pub absorber_width: f64,
    pub absorber_strength: f64,
    pub particles: usize,
    pub density_samples: usize,
    pub substeps: usize,
    pub spin: bool,
    pub sample_times: Vec<f64>,
    pub equivariance_times: Vec<f64>,
    pub analysis: AnalysisSpec,
    pub write_fields: bool,
    pub write_trajectories: bool,
    pub max_written_particles: usize,
}

/// Grid, time step and sizing facts for one ħ rung.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RungPlan {
    pub divisor: f64,
    pub hbar: f64,
    #[serde(skip)]
    pub grid: Grid,
    pub extent: Vec<f64>,
    pub points: Vec<usize>,
    pub required_points: Vec<usize>,
    pub v_max: f64,
    pub wavelength: f64,
    pub dt: f64,
    pub steps_per_output: usize,
    pub outputs: usize,
}

impl Scenario {
    pub fn from_toml(source: &str, overrides: &[String]) -> Result<Self, ScenarioError> {
        let file = ScenarioFile::parse(source, overrides)?;
        let kind = match file.kind.as_str() {
            "statistical" => ScenarioKind::Statistical,
            "determinist" => ScenarioKind::Determinist,
            _ => ScenarioKind::DoubleSlit,
        };
        Scenario::build(file, kind)
    }

    fn build(file: ScenarioFile, kind: ScenarioKind) -> Result<Self, ScenarioError> {
        let invalid = |key: &str, message: String| ScenarioError::InvalidValue { key: key.into(), line: None, message };
        let dim = file.grid.dim;
        let pot = &file.potential;
        let mass = pot.mass.unwrap_or(1.0);
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| ScenarioError::MissingKey { key: format!("potential.{key}"), line: None });
        let potential_kind = match pot.kind.as_str() {
            "free" => PotentialKind::Free,
            "linear" => {
                let f = pot.force.clone().ok_or_else(|| ScenarioError::MissingKey { key: "potential.force".into(), line: None })?;
                if f.len() != dim {
                    return Err(invalid("potential.force", format!("needs {dim} entries")));
                }
                PotentialKind::Linear { force: point(&f) }
            }
            "harmonic" => PotentialKind::Harmonic { omega: need(pot.omega, "omega")? },
            _ => {
                if dim != 2 {
                    return Err(invalid("grid.dim", "the double slit needs a 2D grid".into()));
                }
                PotentialKind::DoubleSlit(DoubleSlit {
                    wall_position: pot.wall_position.unwrap_or(0.0),
                    wall_thickness: need(pot.wall_thickness, "wall_thickness")?,
                    slit_separation: need(pot.slit_separation, "slit_separation")?,
                    slit_width: need(pot.slit_width, "slit_width")?,
                    height: need(pot.height, "height")?,
                    edge_width: need(pot.edge_width, "edge_width")?,
                })
            }
        };
        let potential = PotentialSpec::new(potential_kind, mass).map_err(|e| invalid("potential.kind", e.to_string()))?;
        let initial = match (&file.initial, &file.coherent) {
            (_, Some(c)) => InitialState::Coherent { x0: point(&c.x0), v0: point(&c.v0) },
            (Some(i), None) => InitialState::Packet(PacketSpec {
                center: point(&i.center),
                sigma: if dim == 1 { [i.sigma[0], 1.0] } else { point(&i.sigma) },
                action: LinearChirpAction {
                    mass,
                    velocity: point(i.velocity.as_deref().unwrap_or(&[])),
                    chirp: i.chirp.unwrap_or(0.0),
                    center: point(&i.center),
                },
            }),
            (None, None) => return Err(ScenarioError::MissingKey { key: "[initial]".into(), line: None }),
        };
        let a = &file.analysis;
        let analysis = AnalysisSpec {
            rho_floor: a.rho_floor.unwrap_or(1e-12),
            action_floor: a.action_floor.unwrap_or(1e-10),
            residual_floor: a.residual_floor.unwrap_or(1e-8),
            action_region: a.action_region.unwrap_or(1e-6),
            bin_cells: a.bin_cells.unwrap_or(4),
            minplus_points: a.minplus_points.unwrap_or(64),
            search_refine: a.search_refine.unwrap_or(1),
            window: a.window.unwrap_or(0.25),
            bump_width: a.bump_width.unwrap_or(1.5),
            max_clusters: a.max_clusters.unwrap_or(8),
        };
        let hbar_base = file.hbar.base.unwrap_or(1.0);
        if !(hbar_base > 0.0) {
            return Err(invalid("hbar.base", "must be positive".into()));
        }
        if let Some(dt) = file.solver.max_dt {
            if !(dt > 0.0) {
                return Err(invalid("solver.max_dt", "must be positive".into()));
            }
        }
        if !(0.0..=1.0).contains(&file.solver.absorber_strength.unwrap_or(0.0)) {
            return Err(invalid("solver.absorber_strength", "must lie in [0, 1]".into()));
        }
        if let PotentialKind::Harmonic { omega } = potential.kind {
            if kind == ScenarioKind::Statistical && omega * file.solver.t_final >= PI {
                return Err(invalid("solver.t_final", "the classical comparison needs ω t_final < π (caustic)".into()));
            }
        }
        let mut extent = file.grid.extent.clone();
        if let Some(e) = &extent {
            if e.iter().any(|v| !(*v > 0.0)) {
                return Err(invalid("grid.extent", "must be positive".into()));
            }
        }
        if dim == 1 {
            extent = extent.map(|e| e[..1].to_vec());
        }
        Ok(Scenario {
            name: file.name.clone(),
            kind,
            seed: file.seed,
            dim,
            extent,
            points: file.grid.points.clone(),
            potential,
            initial,
            hbar_base,
            divisors: file.hbar.divisors.clone().unwrap_or_else(|| vec![1.0]),
            t_final: file.solver.t_final,
            output_interval: file.solver.output_interval,
            max_dt: file.solver.max_dt,
            absorber_width: file.solver.absorber_width.unwrap_or(0.0),
            absorber_strength: file.solver.absorber_strength.unwrap_or(0.0),
            particles: file.particles.count.unwrap_or(0),
            density_samples: file.particles.density_samples.unwrap_or(0),
            substeps: file.particles.substeps.unwrap_or(4),
            spin: file.particles.spin.unwrap_or(false),
            sample_times: file.analysis.sample_times.clone().unwrap_or_default(),
            equivariance_times: file.analysis.equivariance_times.clone().unwrap_or_default(),
            analysis,
            write_fields: file.output.fields.unwrap_or(true),
            write_trajectories: file.output.trajectories.unwrap_or(true),
            max_written_particles: file.output.max_written_particles.unwrap_or(200),
            file,
        })
    }

    pub fn mass(&self) -> f64 {
        self.potential.mass
    }

    /// Resolved configuration as TOML (the run's `scenario.echo`).
    pub fn echo(&self) -> String {
        toml::to_string(&self.file).expect("scenario file serializes")
    }

    pub fn hbar_values(&self) -> Vec<f64> {
        self.divisors.iter().map(|d| self.hbar_base / d).collect()
    }

    pub fn coherent_state(&self, hbar: f64) -> Option<CoherentState> {
        match self.initial {
            InitialState::Coherent { x0, v0 } => CoherentState::new(self.dim, self.potential.omega()?, self.mass(), hbar, x0, v0).ok(),
            InitialState::Packet(_) => None,
        }
    }

    /// Width of the initial density per axis at `hbar`.
    fn initial_sigma(&self, hbar: f64) -> Point {
        match &self.initial {
            InitialState::Packet(p) => p.sigma,
            InitialState::Coherent { .. } => {
                let s = self.coherent_state(hbar).map_or(1.0, |c| c.sigma());
                [s, s]
            }
        }
    }

    /// Largest speed a particle can reach: classical speed from the initial
    /// action over the support plus potential energy release, plus four
    /// momentum standard deviations `ħ / 2σ`.
    pub fn max_speed(&self, hbar: f64, extent: &[f64]) -> f64 {
        let m = self.mass();
        let sigma = self.initial_sigma(hbar);
        let (center, grad): (Point, Box<dyn Fn(Point) -> Point>) = match &self.initial {
            InitialState::Packet(p) => {
                let action = p.action;
                (p.center, Box::new(move |x| action.gradient(x)))
            }
            InitialState::Coherent { x0, v0 } => {
                let v0 = *v0;
                (*x0, Box::new(move |_| [m * v0[0], m * v0[1]]))
            }
        };
        let lattice = |lo: f64, hi: f64, n: usize| (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64);
        let axes = |n: usize, f: &dyn Fn(usize) -> (f64, f64)| -> Vec<Point> {
            let (lo0, hi0) = f(0);
            if self.dim == 1 {
                lattice(lo0, hi0, n).map(|x| [x, 0.0]).collect()
            } else {
                let (lo1, hi1) = f(1);
                lattice(lo0, hi0, n).flat_map(|x| lattice(lo1, hi1, n).map(move |y| [x, y])).collect()
            }
        };
        let v_min = axes(101, &|a| (-0.5 * extent[a], 0.5 * extent[a]))
            .into_iter()
            .map(|p| self.potential.value(p, 0.0))
            .fold(f64::INFINITY, f64::min);
        let support = axes(41, &|a| (center[a] - 4.0 * sigma[a], center[a] + 4.0 * sigma[a]));
        let classical = support
            .into_iter()
            .map(|p| {
                let g = grad(p);
                let v2 = (g[0] * g[0] + g[1] * g[1]) / (m * m) + 2.0 * (self.potential.value(p, 0.0) - v_min).max(0.0) / m;
                v2.sqrt()
            })
            .fold(0.0, f64::max);
        let sigma_min = (0..self.dim).map(|a| sigma[a]).fold(f64::INFINITY, f64::min);
        classical + 4.0 * hbar / (2.0 * m * sigma_min)
    }

    /// Box size used when the file gives none (determinist scenarios): the
    /// orbit amplitude plus eight packet widths on each side.
    fn auto_extent(&self, hbar: f64) -> Vec<f64> {
        let amp = match (&self.initial, self.potential.omega()) {
            (InitialState::Coherent { x0, v0 }, Some(omega)) => {
                (x0[0] * x0[0] + x0[1] * x0[1] + (v0[0] * v0[0] + v0[1] * v0[1]) / (omega * omega)).sqrt()
            }
            _ => 0.0,
        };
        let s = self.initial_sigma(hbar)[0];
        let e = 2.0 * (amp + 8.0 * s);
        // round up to two significant digits
        let scale = 10f64.powf(e.log10().floor() - 1.0);
        vec![(e / scale).ceil() * scale; self.dim]
    }

    /// Sizes every rung; with explicit `grid.points`, under-resolved rungs
    /// are rejected with the required point count.
    pub fn plan(&self) -> Result<Vec<RungPlan>, ScenarioError> {
        self.divisors
            .iter()
            .map(|&divisor| {
                let hbar = self.hbar_base / divisor;
                let extent = self.extent.clone().unwrap_or_else(|| self.auto_extent(hbar));
                let v_max = self.max_speed(hbar, &extent);
                let wavelength = 2.0 * PI * hbar / (self.mass() * v_max);
                let required: Vec<usize> = extent
                    .iter()
                    .map(|e| {
                        let n = (POINTS_PER_WAVELENGTH * e / wavelength).ceil() as usize;
                        (n.max(crate::grid::MIN_POINTS) + 1) & !1
                    })
                    .collect();
                let points = match &self.points {
                    Some(p) => {
                        for (axis, (&have, &need)) in p.iter().zip(&required).enumerate() {
                            if have < need {
                                return Err(ScenarioError::Resolution {
                                    hbar,
                                    divisor,
                                    axis,
                                    points: have,
                                    required: need,
                                    wavelength,
                                });
                            }
                        }
                        p.clone()
                    }
                    None => required.iter().map(|n| n.next_power_of_two().max(32)).collect(),
                };
                let grid = Grid::new(self.dim, &extent, &points)
                    .map_err(|e| ScenarioError::InvalidValue { key: "grid".into(), line: None, message: e.to_string() })?;
                let limit = aliasing_limit(&grid, hbar, self.mass());
                let target = self.max_dt.map_or(0.5 * limit, |d| d.min(0.5 * limit));
                let steps_per_output = (self.output_interval / target * (1.0 - 1e-12)).ceil().max(1.0) as usize;
                let dt = self.output_interval / steps_per_output as f64;
                let outputs = (self.t_final / self.output_interval).round() as usize;
                Ok(RungPlan {
                    divisor,
                    hbar,
                    grid,
                    extent,
                    points,
                    required_points: required,
                    v_max,
                    wavelength,
                    dt,
                    steps_per_output,
                    outputs,
                })
            })
            .collect()
    }
}
