//! Experiment configuration: a TOML document with `schema_version = 1`.
//!
//! ```toml
//! schema_version = 1
//! name = "example1"
//! seed = 7
//! particles = 200
//! trials = 50
//! budget = 2400
//! methods = ["wgd", "rwcd"]
//!
//! [problem]
//! init_sigma = 1.0
//! ```
//!
//! Omitted sizes fall back to per-example defaults. Overrides given as
//! `dotted.key=value` are applied to the parsed tree before validation, so a
//! misspelled key is rejected exactly like one written in the file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::Distribution;
use crate::error::{config_err, Error, Result};
use crate::solvers::{Method, DEFAULT_NEWTON_ITERS};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleName {
    Example1,
    Example2,
    Example3,
    Example4,
    Example5,
    Custom,
}

impl ExampleName {
    pub const ALL: [ExampleName; 6] = [
        ExampleName::Example1,
        ExampleName::Example2,
        ExampleName::Example3,
        ExampleName::Example4,
        ExampleName::Example5,
        ExampleName::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExampleName::Example1 => "example1",
            ExampleName::Example2 => "example2",
            ExampleName::Example3 => "example3",
            ExampleName::Example4 => "example4",
            ExampleName::Example5 => "example5",
            ExampleName::Custom => "custom",
        }
    }

    /// Problem dimension when `dim` is not configured.
    pub fn default_dim(self) -> Option<usize> {
        match self {
            ExampleName::Example1 => Some(2),
            ExampleName::Custom => None,
            _ => Some(50),
        }
    }

    pub fn default_particles(self) -> usize {
        match self {
            ExampleName::Example1 | ExampleName::Example2 => 2000,
            _ => 200,
        }
    }

    /// Budget in full-step equivalents; multiplied by the particle dimension.
    pub fn default_full_steps(self) -> u64 {
        match self {
            ExampleName::Example1 => 1200,
            ExampleName::Example4 => 20_000,
            _ => 2000,
        }
    }

    pub fn default_methods(self) -> Vec<Method> {
        match self {
            ExampleName::Example4 => vec![Method::Wpg, Method::Rwcp],
            _ => vec![Method::Wgd, Method::Rwcd],
        }
    }
}

impl fmt::Display for ExampleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExampleName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExampleName::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| config_err(format!("unknown experiment `{s}`")))
    }
}

/// Problem-specific knobs. Keys that do not apply to the chosen example are
/// accepted and ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemParams {
    /// Eigenvalue range of `P` and `Q` (example 2).
    pub eig_min: Option<f64>,
    pub eig_max: Option<f64>,
    /// Kernel rate range (example 3).
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    /// Size of the target ensemble; defaults to the particle count.
    pub target_particles: Option<usize>,
    /// First coordinate of the initial mean (example 3).
    pub init_shift: Option<f64>,
    pub init_sigma: Option<f64>,
    /// Every coordinate of the initial mean (example 4).
    pub init_mean: Option<f64>,
    pub eps: Option<f64>,
    /// Diagonal range of `Q` (example 4).
    pub q_min: Option<f64>,
    pub q_max: Option<f64>,
    /// Target range of the regularizer constants `H_i` (example 4).
    pub h_min: Option<f64>,
    pub h_max: Option<f64>,
    /// `A` is the orthogonal factor of `I + mixing·G`; 0 gives `A = I`.
    pub mixing: Option<f64>,
    /// Number of data samples `K` (example 5).
    pub data_samples: Option<usize>,
    pub data_bound: Option<f64>,
    pub region_a: Option<f64>,
    pub region_b: Option<f64>,
    pub region_w: Option<f64>,
    pub region_c: Option<f64>,
    pub radius_alpha: Option<f64>,
    pub radius_beta: Option<f64>,
    pub radius_w: Option<f64>,
    pub radius_b: Option<f64>,
    /// Row-major matrices for `custom`.
    pub potential: Option<Vec<Vec<f64>>>,
    pub interaction: Option<Vec<Vec<f64>>>,
    pub mean_matrix: Option<Vec<Vec<f64>>>,
    /// Smoothed ℓ1 regularizer weights for `custom`; makes it composite.
    pub l1_weights: Option<Vec<f64>>,
    pub l1_rotation: Option<Vec<Vec<f64>>>,
    pub init: Option<Distribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub name: ExampleName,
    #[serde(default)]
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub particles: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<Method>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_stride: Option<u64>,
    #[serde(default = "default_newton_iters")]
    pub newton_iters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wgd_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wpg_eta: Option<f64>,
    #[serde(default)]
    pub problem: ProblemParams,
}

fn default_newton_iters() -> usize {
    DEFAULT_NEWTON_ITERS
}

impl ExperimentSpec {
    /// All-default spec for a named example.
    pub fn example(name: ExampleName) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name,
            seed: 0,
            dim: None,
            particles: None,
            trials: None,
            budget: None,
            methods: None,
            trace_stride: None,
            newton_iters: DEFAULT_NEWTON_ITERS,
            wgd_step: None,
            wpg_eta: None,
            problem: ProblemParams::default(),
        }
    }

    pub fn dim(&self) -> Result<usize> {
        self.dim
            .or(self.name.default_dim())
            .ok_or_else(|| config_err("`dim` is required for custom experiments"))
    }

    /// Dimension of a particle; differs from `dim` only for the network.
    pub fn particle_dim(&self) -> Result<usize> {
        Ok(self.dim()? + if self.name == ExampleName::Example5 { 3 } else { 0 })
    }

    pub fn particles(&self) -> usize {
        self.particles.unwrap_or(self.name.default_particles())
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or(50)
    }

    pub fn budget(&self) -> Result<u64> {
        Ok(match self.budget {
            Some(b) => b,
            None => self.name.default_full_steps() * self.particle_dim()? as u64,
        })
    }

    pub fn methods(&self) -> Vec<Method> {
        self.methods.clone().unwrap_or_else(|| self.name.default_methods())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let dim = self.dim()?;
        if dim == 0 {
            return Err(config_err("`dim` must be positive"));
        }
        if self.name == ExampleName::Example1 && dim != 2 {
            return Err(config_err("example1 is two-dimensional"));
        }
        if self.particles() == 0 {
            return Err(config_err("`particles` must be positive"));
        }
        if self.trials() == 0 {
            return Err(config_err("`trials` must be positive"));
        }
        if self.methods().is_empty() {
            return Err(config_err("`methods` must not be empty"));
        }
        if self.trace_stride == Some(0) {
            return Err(config_err("`trace_stride` must be positive"));
        }
        for (key, v) in [("wgd_step", self.wgd_step), ("wpg_eta", self.wpg_eta)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(config_err(format!("`{key}` must be positive, got {v}")));
                }
            }
        }
        self.budget()?;
        Ok(())
    }

    /// Parses and validates a TOML document, applying `key=value` overrides.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let spec = if overrides.is_empty() {
            // keeps line/column information in diagnostics
            toml::from_str::<Self>(text).map_err(|e| config_err(e.to_string()))?
        } else {
            Self::deserialize(toml::Value::Table(table)).map_err(|e| config_err(e.to_string()))?
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides).map_err(|e| match e {
            Error::Config(msg) => config_err(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }
}

/// Sets `a.b.c = value` in the tree. The value is read as a TOML literal
/// when it parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("override `{assignment}` is not of the form key=value")))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(config_err(format!("malformed override key `{path}`")));
    }
    let (last, parents) = keys.split_last().expect("nonempty");
    let mut node = table;
    for k in parents {
        let entry = node.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("override `{path}`: `{k}` is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "schema_version = 1\nname = \"example1\"\nseed = 3\nparticles = 50\n";

    #[test]
    fn defaults_filled_in() {
        let s = ExperimentSpec::from_toml(BASIC, &[]).unwrap();
        assert_eq!(s.particles(), 50);
        assert_eq!(s.budget().unwrap(), 2400);
        assert_eq!(s.methods(), vec![Method::Wgd, Method::Rwcd]);
        assert_eq!(s.newton_iters, 20);
        assert_eq!(s.trials(), 50);
    }

    #[test]
    fn example_budgets_match_full_step_counts() {
        assert_eq!(ExperimentSpec::example(ExampleName::Example2).budget().unwrap(), 100_000);
        assert_eq!(ExperimentSpec::example(ExampleName::Example4).budget().unwrap(), 1_000_000);
        assert_eq!(ExperimentSpec::example(ExampleName::Example5).budget().unwrap(), 106_000);
    }

    #[test]
    fn overrides_apply_with_types() {
        let o = vec!["trials=1".to_string(), "problem.eps=0.5".into(), "methods=[\"rwcd\"]".into()];
        let s = ExperimentSpec::from_toml(BASIC, &o).unwrap();
        assert_eq!(s.trials, Some(1));
        assert_eq!(s.problem.eps, Some(0.5));
        assert_eq!(s.methods(), vec![Method::Rwcd]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentSpec::from_toml(BASIC, &["problem.epsilon=1".into()]).is_err());
        assert!(ExperimentSpec::from_toml(&format!("{BASIC}particle = 3\n"), &[]).is_err());
        assert!(ExperimentSpec::from_toml(BASIC, &["bogus".into()]).is_err());
    }

    #[test]
    fn schema_version_checked() {
        let text = BASIC.replace("schema_version = 1", "schema_version = 2");
        assert!(ExperimentSpec::from_toml(&text, &[]).is_err());
        assert!(ExperimentSpec::from_toml("name = \"example1\"", &[]).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = ExperimentSpec::from_toml("schema_version = 1\nname = example1\n", &[]).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn toml_round_trip() {
        let mut s = ExperimentSpec::example(ExampleName::Example4);
        s.particles = Some(50);
        s.problem.mixing = Some(0.01);
        let back = ExperimentSpec::from_toml(&s.to_toml(), &[]).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn string_override_falls_back_to_bare_string() {
        let s = ExperimentSpec::from_toml(BASIC, &["name=example3".into()]).unwrap();
        assert_eq!(s.name, ExampleName::Example3);
    }
}
