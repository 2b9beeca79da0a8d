//! TOML run configuration: parsing, defaults and validation.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::systems::thermo::ThermoSpec;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("parse error: {0}")]
    ParseNoSpan(String),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub system: SystemBlock,
    #[serde(default)]
    pub solution: SolutionBlock,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
    #[serde(default)]
    pub output: OutputBlock,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Thermo,
    DampedOscillator,
    LiouvilleSphere,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub family: Family,
    /// Half the phase dimension minus one half (`thermo`, `raw`, `liouville_sphere`).
    pub n: Option<usize>,
    /// `thermo`: constant `a⁰` of the shipped instance.
    pub a0: Option<f64>,
    /// `thermo`: full specification replacing the shipped instance.
    pub spec: Option<ThermoSpec>,
    /// `damped_oscillator`: damping coefficient.
    pub alpha: Option<f64>,
    pub anchor: Option<f64>,
    pub sector: Option<(f64, f64)>,
    /// `liouville_sphere`: radius of the level set.
    pub radius: Option<f64>,
    /// `liouville_sphere`: number of sampled points.
    pub points: Option<usize>,
    /// `raw`: Hamiltonian over `x1..xn, y1..yn, z`.
    #[serde(rename = "H")]
    pub hamiltonian: Option<String>,
    /// `raw`: conformal factor `g` of the effective form `gη`.
    #[serde(rename = "g")]
    pub conformal: Option<String>,
    /// `raw`: contact form; only `"darboux"` is supported.
    pub form: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FibrationSpec {
    /// `"x"` or `"xz"`.
    Kind(String),
    /// Names of the retained coordinates.
    Coordinates(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionBlock {
    pub fibration: Option<FibrationSpec>,
    #[serde(default)]
    pub params: Vec<String>,
    /// One expression per fiber coordinate, over the retained names then `params`.
    #[serde(default)]
    pub components: Vec<String>,
    pub base_lower: Option<Vec<f64>>,
    pub base_upper: Option<Vec<f64>>,
    pub param_lower: Option<Vec<f64>>,
    pub param_upper: Option<Vec<f64>>,
    /// Sample count for verification and table checks.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    20
}

impl Default for SolutionBlock {
    fn default() -> Self {
        Self {
            fibration: None,
            params: Vec::new(),
            components: Vec::new(),
            base_lower: None,
            base_upper: None,
            param_lower: None,
            param_upper: None,
            samples: default_samples(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub quadrature: f64,
    pub solver: f64,
    pub classification: f64,
    pub verify: f64,
    pub compare: f64,
    pub drift: f64,
    pub inverse: f64,
    pub law: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            quadrature: 1e-10,
            solver: 1e-9,
            classification: 1e-9,
            verify: 1e-8,
            compare: 1e-6,
            drift: 1e-6,
            inverse: 1e-9,
            law: 1e-5,
        }
    }
}

impl Tolerances {
    fn entries(&mut self) -> [(&'static str, &mut f64); 8] {
        [
            ("quadrature", &mut self.quadrature),
            ("solver", &mut self.solver),
            ("classification", &mut self.classification),
            ("verify", &mut self.verify),
            ("compare", &mut self.compare),
            ("drift", &mut self.drift),
            ("inverse", &mut self.inverse),
            ("law", &mut self.law),
        ]
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<(), ConfigError> {
        let slot = self
            .entries()
            .into_iter()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| invalid(format!("unknown tolerance 'tolerances.{key}'")))?;
        *slot.1 = value;
        Ok(())
    }

    fn validate(&mut self) -> Result<(), ConfigError> {
        for (key, value) in self.entries() {
            if !(value.is_finite() && *value > 0.0) {
                return Err(invalid(format!(
                    "tolerances.{key} must be positive, got {value}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Verify,
    Reconstruct,
    Integrate,
    Compare,
    FirstIntegrals,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Verify => "verify",
            TaskKind::Reconstruct => "reconstruct",
            TaskKind::Integrate => "integrate",
            TaskKind::Compare => "compare",
            TaskKind::FirstIntegrals => "first-integrals",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Unique task name; defaults to the kind, suffixed when repeated.
    pub name: Option<String>,
    /// `reconstruct`: parameters `λ`.
    pub params: Option<Vec<f64>>,
    /// Base point for `reconstruct`, phase point for `integrate` and `first-integrals`.
    pub start: Option<Vec<f64>>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    /// `compare`: name of an earlier trajectory-producing task.
    pub trajectory: Option<String>,
    /// `compare`: two exported trajectory files.
    pub files: Option<Vec<PathBuf>>,
}

fn default_t_end() -> f64 {
    1.0
}

fn default_step() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_format")]
    pub format: Format,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_format() -> Format {
    Format::Csv
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            format: default_format(),
        }
    }
}

/// Resolved task name and spec.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTask {
    pub name: String,
    pub spec: TaskSpec,
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    toml::from_str(text).map_err(|err| match err.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            ConfigError::Parse {
                line,
                column,
                message: err.message().to_string(),
            }
        }
        None => ConfigError::ParseNoSpan(err.message().to_string()),
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config = parse_config(&text)?;
    config.validate()?;
    Ok(config)
}

fn require<T: Clone>(value: &Option<T>, key: &str) -> Result<T, ConfigError> {
    value
        .clone()
        .ok_or_else(|| invalid(format!("{key} required")))
}

fn check_box(lower: &[f64], upper: &[f64], key: &str) -> Result<(), ConfigError> {
    if lower.len() != upper.len() || lower.is_empty() {
        return Err(invalid(format!(
            "{key}: lower and upper bounds need the same nonzero length"
        )));
    }
    if lower.iter().zip(upper).any(|(lo, hi)| !(lo < hi)) {
        return Err(invalid(format!("{key}: box is empty")));
    }
    Ok(())
}

impl RunConfig {
    /// Check every cross-field constraint the types cannot express.
    pub fn validate(&mut self) -> Result<(), ConfigError> {
        self.tolerances.validate()?;
        let sys = &self.system;
        let solution_given = self.solution.fibration.is_some()
            || !self.solution.components.is_empty()
            || !self.solution.params.is_empty();
        match sys.family {
            Family::Raw => {
                let n = require(&sys.n, "system.n")?;
                if n == 0 {
                    return Err(invalid("system.n must be at least 1"));
                }
                require(&sys.hamiltonian, "system.H")?;
                if let Some(form) = &sys.form {
                    if form != "darboux" {
                        return Err(invalid(format!(
                            "system.form: only \"darboux\" is supported, got \"{form}\""
                        )));
                    }
                }
                let needs_solution = self.tasks.iter().any(|task| task.kind != TaskKind::Compare);
                if needs_solution || solution_given {
                    let sol = &self.solution;
                    require(&sol.fibration, "solution.fibration")?;
                    if sol.params.len() != n + 1 {
                        return Err(invalid(format!(
                            "solution.params: need n + 1 = {} names, got {}",
                            n + 1,
                            sol.params.len()
                        )));
                    }
                    let bl = require(&sol.base_lower, "solution.base_lower")?;
                    let bu = require(&sol.base_upper, "solution.base_upper")?;
                    check_box(&bl, &bu, "solution.base_lower/base_upper")?;
                    let pl = require(&sol.param_lower, "solution.param_lower")?;
                    let pu = require(&sol.param_upper, "solution.param_upper")?;
                    check_box(&pl, &pu, "solution.param_lower/param_upper")?;
                    if pl.len() != n + 1 {
                        return Err(invalid("solution.param_lower: need n + 1 bounds"));
                    }
                }
            }
            Family::Thermo => {
                if let Some(spec) = &sys.spec {
                    check_box(&spec.base_lower, &spec.base_upper, "system.spec base box")?;
                    check_box(
                        &spec.param_lower,
                        &spec.param_upper,
                        "system.spec parameter box",
                    )?;
                } else if sys.n == Some(0) {
                    return Err(invalid("system.n must be at least 1"));
                }
            }
            Family::DampedOscillator => {
                if let Some(alpha) = sys.alpha {
                    if !alpha.is_finite() || alpha == 0.0 {
                        return Err(invalid("system.alpha must be finite and nonzero"));
                    }
                }
            }
            Family::LiouvilleSphere => {
                if let Some(r) = sys.radius {
                    if !(r > 0.0) {
                        return Err(invalid("system.radius must be positive"));
                    }
                }
                if let Some(task) = self.tasks.iter().find(|task| task.kind != TaskKind::Verify) {
                    return Err(invalid(format!(
                        "tasks: liouville_sphere supports only verify, got {}",
                        task.kind.as_str()
                    )));
                }
            }
        }
        if sys.family != Family::Raw && solution_given {
            return Err(invalid(
                "solution: built-in families carry their own solution; only boxes and samples may be set",
            ));
        }
        let sol = &self.solution;
        for (lower, upper, key) in [
            (
                &sol.base_lower,
                &sol.base_upper,
                "solution.base_lower/base_upper",
            ),
            (
                &sol.param_lower,
                &sol.param_upper,
                "solution.param_lower/param_upper",
            ),
        ] {
            match (lower, upper) {
                (Some(lo), Some(hi)) => check_box(lo, hi, key)?,
                (None, None) => {}
                _ => return Err(invalid(format!("{key}: give both bounds"))),
            }
        }
        if sys.family == Family::LiouvilleSphere
            && (sol.base_lower.is_some() || sol.param_lower.is_some())
        {
            return Err(invalid(
                "solution: liouville_sphere has no complete solution",
            ));
        }
        if sys.family == Family::DampedOscillator {
            if sol.base_lower.as_ref().is_some_and(|b| b.len() != 1) {
                return Err(invalid(
                    "solution.base_lower: the oscillator base is q alone",
                ));
            }
            if sol.param_lower.as_ref().is_some_and(|b| b.len() != 2) {
                return Err(invalid(
                    "solution.param_lower: the oscillator has two parameters",
                ));
            }
        }
        if self.solution.samples == 0 {
            return Err(invalid("solution.samples must be positive"));
        }
        if self.tasks.is_empty() {
            return Err(invalid("tasks: at least one task required"));
        }
        let named = self.named_tasks();
        let mut seen = HashSet::new();
        for (i, task) in named.iter().enumerate() {
            if !seen.insert(task.name.clone()) {
                return Err(invalid(format!("tasks: duplicate name '{}'", task.name)));
            }
            let spec = &task.spec;
            let key = |k: &str| format!("tasks[{i}].{k}");
            if !(spec.t_end > 0.0 && spec.step > 0.0 && spec.step <= spec.t_end) {
                return Err(invalid(format!("{}: need 0 < step <= t_end", key("step"))));
            }
            match spec.kind {
                TaskKind::Reconstruct => {
                    require(&spec.params, &key("params"))?;
                    require(&spec.start, &key("start"))?;
                }
                TaskKind::Integrate | TaskKind::FirstIntegrals => {
                    require(&spec.start, &key("start"))?;
                }
                TaskKind::Compare => match (&spec.trajectory, &spec.files) {
                    (Some(target), None) => {
                        let earlier = named[..i].iter().find(|o| &o.name == target);
                        match earlier {
                            Some(o)
                                if matches!(
                                    o.spec.kind,
                                    TaskKind::Reconstruct | TaskKind::Integrate
                                ) => {}
                            Some(_) => {
                                return Err(invalid(format!(
                                    "{}: '{target}' does not produce a trajectory",
                                    key("trajectory")
                                )))
                            }
                            None => {
                                return Err(invalid(format!(
                                    "{}: no earlier task named '{target}'",
                                    key("trajectory")
                                )))
                            }
                        }
                    }
                    (None, Some(files)) if files.len() == 2 => {}
                    (None, Some(_)) => {
                        return Err(invalid(format!("{}: need exactly two paths", key("files"))))
                    }
                    _ => {
                        return Err(invalid(format!(
                            "{}: give either trajectory or files",
                            key("trajectory")
                        )))
                    }
                },
                TaskKind::Verify => {}
            }
        }
        Ok(())
    }

    /// Tasks with unique names: explicit names, else the kind, suffixed `-2`, `-3`, …
    pub fn named_tasks(&self) -> Vec<NamedTask> {
        let mut counts = std::collections::HashMap::new();
        self.tasks
            .iter()
            .map(|task| {
                let name = task.name.clone().unwrap_or_else(|| {
                    let count = counts.entry(task.kind).or_insert(0);
                    *count += 1;
                    if *count == 1 {
                        task.kind.as_str().to_string()
                    } else {
                        format!("{}-{}", task.kind.as_str(), count)
                    }
                });
                NamedTask {
                    name,
                    spec: task.clone(),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RAW: &str = r#"
[system]
family = "raw"
n = 1
H = "y1"

[solution]
fibration = "x"
params = ["a", "b"]
components = ["a", "b"]
base_lower = [-1.0]
base_upper = [1.0]
param_lower = [-1.0, -1.0]
param_upper = [1.0, 1.0]

[[tasks]]
kind = "verify"
"#;

    #[test]
    fn defaults_are_filled() {
        let mut cfg = parse_config(RAW).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.tolerances, Tolerances::default());
        assert_eq!(cfg.output.format, Format::Csv);
        assert_eq!(cfg.named_tasks()[0].name, "verify");
    }

    #[test]
    fn missing_hamiltonian_is_named() {
        let mut cfg = parse_config(&RAW.replace("H = \"y1\"", "")).unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert_eq!(err, "system.H required");
    }

    #[test]
    fn negative_tolerance_is_rejected() {
        let text = format!("{RAW}\n[tolerances]\nsolver = -1.0\n");
        let mut cfg = parse_config(&text).unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("tolerances.solver"), "{err}");
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = parse_config("seed = 1\n[system\nfamily = 2").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config(&RAW.replace("n = 1", "n = 1\nhamiltonian = \"y1\"")).unwrap_err();
        assert!(err.to_string().contains("hamiltonian"), "{err}");
    }

    #[test]
    fn compare_needs_an_earlier_trajectory() {
        let text = format!("{RAW}\n[[tasks]]\nkind = \"compare\"\ntrajectory = \"verify\"\n");
        let mut cfg = parse_config(&text).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn repeated_kinds_get_suffixes() {
        let text = format!("{RAW}\n[[tasks]]\nkind = \"verify\"\n");
        let mut cfg = parse_config(&text).unwrap();
        cfg.validate().unwrap();
        let names: Vec<_> = cfg
            .named_tasks()
            .into_iter()
            .map(|task| task.name)
            .collect();
        assert_eq!(names, ["verify", "verify-2"]);
    }
}
