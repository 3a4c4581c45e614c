//! Declarative experiment configuration. The on-disk format is TOML with
//! nested blocks; unknown keys are rejected so typos fail fast.

use crate::operator::{Ellipticity, OperatorSpec, SymMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown scenario '{0}'; run list-scenarios for the catalog")]
    UnknownScenario(String),
    #[error("schedule must be strictly increasing")]
    ScheduleNotIncreasing,
    #[error("tolerances must be positive, got {0}")]
    NonPositiveTolerance(f64),
    #[error("unknown operator kind '{0}'")]
    UnknownOperatorKind(String),
    #[error("bellman operator needs at least one control matrix")]
    MissingControls,
    #[error(transparent)]
    Operator(#[from] crate::operator::OperatorError),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OperatorBlock {
    pub kind: String,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub n: usize,
    /// Control matrices for Bellman operators, row-major.
    #[serde(default)]
    pub controls: Vec<Vec<f64>>,
    #[serde(default)]
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub r_out: f64,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    #[serde(default = "default_directions")]
    pub stencil_directions: usize,
}

fn default_directions() -> usize {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExtractionBlock {
    pub schedule: Vec<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default)]
    pub dir: Option<String>,
}

/// Experiment configuration; blocks omitted in the file fall back to the
/// scenario defaults.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub operator: Option<OperatorBlock>,
    #[serde(default)]
    pub grid: Option<GridBlock>,
    #[serde(default)]
    pub extraction: Option<ExtractionBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(ex) = &self.extraction {
            if ex.tol <= 0.0 {
                return Err(ConfigError::NonPositiveTolerance(ex.tol));
            }
            for w in ex.schedule.windows(2) {
                if w[1] <= w[0] {
                    return Err(ConfigError::ScheduleNotIncreasing);
                }
            }
        }
        Ok(())
    }
}

impl OperatorBlock {
    pub fn build(&self) -> Result<OperatorSpec, ConfigError> {
        let e = Ellipticity::new(self.lambda, self.big_lambda, self.n)?;
        match self.kind.as_str() {
            "pucci_plus" => Ok(OperatorSpec::PucciPlus(e)),
            "pucci_minus" => Ok(OperatorSpec::PucciMinus(e)),
            "laplace" => Ok(OperatorSpec::Laplace { dim: self.n }),
            "bellman" => {
                if self.controls.is_empty() {
                    return Err(ConfigError::MissingControls);
                }
                let mut mats = Vec::with_capacity(self.controls.len());
                for flat in &self.controls {
                    let n = self.n;
                    let rows: Vec<Vec<f64>> =
                        (0..n).map(|i| flat[i * n..(i + 1) * n].to_vec()).collect();
                    mats.push(SymMatrix::from_rows(&rows)?);
                }
                Ok(OperatorSpec::bellman(e, mats)?)
            }
            other => Err(ConfigError::UnknownOperatorKind(other.to_string())),
        }
    }
}

/// FNV-1a hash of the canonical JSON serialization, excluding the output
/// block so relocated runs hash identically.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut canonical = cfg.clone();
    canonical.output = OutputBlock::default();
    let text = serde_json::to_string(&canonical).expect("config serializes");
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = r#"
scenario = "pucci_linear_growth"
seed = 7

[operator]
kind = "pucci_plus"
lambda = 1.0
Lambda = 2.0
n = 2

[grid]
r_out = 48.0
radial_nodes = 189
angular_nodes = 48

[extraction]
schedule = [4.0, 8.0, 16.0]
tol = 1e-3

[output]
dir = "out"
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.scenario, "pucci_linear_growth");
        assert_eq!(cfg.grid.as_ref().unwrap().stencil_directions, 8);
        let op = cfg.operator.as_ref().unwrap().build().unwrap();
        assert_eq!(op.dim(), 2);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = r#"
scenario = "laplace_baseline"
typo_key = 1
"#;
        assert!(ExperimentConfig::from_toml(text).is_err());
    }

    #[test]
    fn rejects_bad_schedule() {
        let text = r#"
scenario = "laplace_baseline"

[extraction]
schedule = [8.0, 4.0]
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::ScheduleNotIncreasing)
        ));
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig::from_toml("scenario = \"laplace_baseline\"").unwrap();
        let mut b = a.clone();
        b.output.dir = Some("elsewhere".into());
        assert_eq!(config_hash(&a), config_hash(&b));
        let mut c = a.clone();
        c.seed = 1;
        assert_ne!(config_hash(&a), config_hash(&c));
    }
}
