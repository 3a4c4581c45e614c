//! Reproducible experiment driver: declarative configs, built-in scenarios,
//! deterministic artifacts, parameter sweeps, and golden-file verification.

pub mod config;
pub mod scenario;

pub use config::{config_hash, ConfigError, ExperimentConfig};
pub use scenario::{ScenarioInfo, SCENARIOS};

use crate::asymptotics::AsymptoticsError;
use crate::fundamental::FundamentalError;
use crate::grid::GridError;
use crate::operator::OperatorError;
use crate::solver::SolveError;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
    #[error(transparent)]
    Fundamental(#[from] FundamentalError),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("missing golden baseline: {0}")]
    MissingBaseline(String),
    #[error("sweep grid is empty")]
    EmptySweep,
}

impl From<std::io::Error> for HarnessError {
    fn from(source: std::io::Error) -> Self {
        Self::Io {
            path: String::new(),
            source,
        }
    }
}

/// One tolerance-checked quantity of a scenario run.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub expected: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultBundle {
    pub scenario: String,
    pub config_hash: String,
    pub artifacts: Vec<String>,
    pub checks: Vec<CheckResult>,
    pub all_pass: bool,
    pub wall_ms: u64,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

/// Writes through a temp file and renames into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|source| HarnessError::Io {
        path: tmp.display().to_string(),
        source,
    })?;
    std::fs::rename(&tmp, path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// Output root: config block, then the PUCCI_LAB_OUT environment variable,
/// then ./out.
pub fn resolve_out_dir(cfg: &ExperimentConfig, override_dir: Option<&Path>) -> PathBuf {
    if let Some(d) = override_dir {
        return d.to_path_buf();
    }
    if let Some(d) = &cfg.output.dir {
        return PathBuf::from(d);
    }
    let root = std::env::var("PUCCI_LAB_OUT").unwrap_or_else(|_| "out".to_string());
    PathBuf::from(root).join(&cfg.scenario)
}

/// Runs a scenario end to end and writes `bundle.json` plus the scenario
/// artifacts under the output directory.
pub fn run(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ResultBundle, HarnessError> {
    cfg.validate()?;
    if !scenario::scenario_exists(&cfg.scenario) {
        return Err(ConfigError::UnknownScenario(cfg.scenario.clone()).into());
    }
    let out = resolve_out_dir(cfg, out_dir);
    std::fs::create_dir_all(&out).map_err(|source| HarnessError::Io {
        path: out.display().to_string(),
        source,
    })?;
    let start = Instant::now();
    let (checks, artifacts) = scenario::run_scenario(cfg, &out)?;
    let bundle = ResultBundle {
        scenario: cfg.scenario.clone(),
        config_hash: config_hash(cfg),
        all_pass: checks.iter().all(|c| c.pass),
        checks,
        artifacts,
        wall_ms: start.elapsed().as_millis() as u64,
        out_dir: out.clone(),
    };
    write_atomic(&out.join("bundle.json"), &serde_json::to_vec_pretty(&bundle)?)?;
    Ok(bundle)
}

/// Parameter sweep over ellipticity ratios and dimensions; each combination
/// reruns the base scenario with the operator block overridden. Individual
/// failures are recorded and the sweep continues.
#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub lambda: f64,
    pub big_lambda: f64,
    pub n: usize,
    pub case_label: String,
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    pub all_pass: bool,
    pub error: Option<String>,
    pub out_dir: String,
}

pub fn case_label(alpha_plus: f64) -> &'static str {
    if alpha_plus.abs() < 1e-12 {
        "alpha_plus_zero"
    } else if alpha_plus < 0.0 {
        "alpha_plus_negative"
    } else {
        "alpha_plus_positive"
    }
}

pub fn sweep(
    base: &ExperimentConfig,
    ratios: &[f64],
    dims: &[usize],
    out_root: &Path,
) -> Result<Vec<SweepEntry>, HarnessError> {
    if ratios.is_empty() || dims.is_empty() {
        return Err(HarnessError::EmptySweep);
    }
    base.validate()?;
    let combos: Vec<(f64, usize)> = ratios
        .iter()
        .flat_map(|&r| dims.iter().map(move |&n| (r, n)))
        .collect();
    let entries: Vec<SweepEntry> = combos
        .par_iter()
        .map(|&(ratio, n)| {
            let mut cfg = base.clone();
            let mut block = cfg.operator.clone().unwrap_or(config::OperatorBlock {
                kind: "pucci_plus".into(),
                lambda: 1.0,
                big_lambda: ratio,
                n,
                controls: Vec::new(),
                rhs: 0.0,
            });
            block.lambda = 1.0;
            block.big_lambda = ratio;
            block.n = n;
            cfg.operator = Some(block);
            let sub = out_root.join(format!("ratio_{ratio}_n_{n}"));
            cfg.output.dir = Some(sub.display().to_string());
            let exps = crate::fundamental::scaling_exponents(
                &crate::operator::Ellipticity::new(1.0, ratio, n).expect("valid sweep combo"),
            );
            match run(&cfg, Some(&sub)) {
                Ok(bundle) => SweepEntry {
                    lambda: 1.0,
                    big_lambda: ratio,
                    n,
                    case_label: case_label(exps.alpha_plus).to_string(),
                    alpha_plus: exps.alpha_plus,
                    alpha_minus: exps.alpha_minus,
                    all_pass: bundle.all_pass,
                    error: None,
                    out_dir: sub.display().to_string(),
                },
                Err(err) => SweepEntry {
                    lambda: 1.0,
                    big_lambda: ratio,
                    n,
                    case_label: case_label(exps.alpha_plus).to_string(),
                    alpha_plus: exps.alpha_plus,
                    alpha_minus: exps.alpha_minus,
                    all_pass: false,
                    error: Some(err.to_string()),
                    out_dir: sub.display().to_string(),
                },
            }
        })
        .collect();

    std::fs::create_dir_all(out_root).map_err(|source| HarnessError::Io {
        path: out_root.display().to_string(),
        source,
    })?;
    let mut csv = String::from("# pucci-lab sweep v1\nlambda,Lambda,n,case_label,alpha_plus,alpha_minus,all_pass\n");
    for e in &entries {
        csv.push_str(&format!(
            "{},{},{},{},{:.12},{:.12},{}\n",
            e.lambda, e.big_lambda, e.n, e.case_label, e.alpha_plus, e.alpha_minus, e.all_pass
        ));
    }
    write_atomic(&out_root.join("sweep.csv"), csv.as_bytes())?;
    write_atomic(
        &out_root.join("sweep.json"),
        &serde_json::to_vec_pretty(&entries)?,
    )?;
    Ok(entries)
}

/// One numeric discrepancy between a bundle and its golden baseline.
#[derive(Debug, Clone, Serialize)]
pub struct Difference {
    pub file: String,
    pub location: String,
    pub actual: String,
    pub expected: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffReport {
    pub differences: Vec<Difference>,
    pub files_compared: usize,
}

impl DiffReport {
    pub fn clean(&self) -> bool {
        self.differences.is_empty()
    }
}

const REL_TOL: f64 = 1e-7;
const ABS_TOL: f64 = 1e-9;
/// Field names excluded from comparison (timing noise).
const SKIP_KEYS: &[&str] = &["wall_ms"];

/// Numeric comparison of a result directory against a golden baseline.
/// Every file in the golden directory must exist in the bundle and agree
/// within tolerance.
pub fn verify(bundle_dir: &Path, golden_dir: &Path) -> Result<DiffReport, HarnessError> {
    if !golden_dir.is_dir() {
        return Err(HarnessError::MissingBaseline(
            golden_dir.display().to_string(),
        ));
    }
    let mut diffs = Vec::new();
    let mut compared = 0usize;
    let mut stack = vec![golden_dir.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let mut entries: Vec<_> = std::fs::read_dir(&dir)
            .map_err(|source| HarnessError::Io {
                path: dir.display().to_string(),
                source,
            })?
            .collect::<Result<_, _>>()
            .map_err(|source| HarnessError::Io {
                path: dir.display().to_string(),
                source,
            })?;
        entries.sort_by_key(|e| e.path());
        for entry in entries {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path
                .strip_prefix(golden_dir)
                .expect("walked inside the golden dir")
                .to_path_buf();
            let counterpart = bundle_dir.join(&rel);
            if !counterpart.exists() {
                diffs.push(Difference {
                    file: rel.display().to_string(),
                    location: "<file>".into(),
                    actual: "<missing>".into(),
                    expected: "present".into(),
                });
                continue;
            }
            compared += 1;
            let golden_text =
                std::fs::read_to_string(&path).map_err(|source| HarnessError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
            let actual_text =
                std::fs::read_to_string(&counterpart).map_err(|source| HarnessError::Io {
                    path: counterpart.display().to_string(),
                    source,
                })?;
            let rel_name = rel.display().to_string();
            match path.extension().and_then(|e| e.to_str()) {
                Some("json") => {
                    let a: Value = serde_json::from_str(&actual_text)?;
                    let g: Value = serde_json::from_str(&golden_text)?;
                    compare_json(&rel_name, "$", &a, &g, &mut diffs);
                }
                _ => compare_csv(&rel_name, &actual_text, &golden_text, &mut diffs),
            }
        }
    }
    Ok(DiffReport {
        differences: diffs,
        files_compared: compared,
    })
}

fn numbers_match(a: f64, b: f64) -> bool {
    if a == b || (a.is_nan() && b.is_nan()) {
        return true;
    }
    (a - b).abs() <= ABS_TOL + REL_TOL * a.abs().max(b.abs())
}

fn compare_json(file: &str, path: &str, a: &Value, g: &Value, diffs: &mut Vec<Difference>) {
    match (a, g) {
        (Value::Object(ao), Value::Object(go)) => {
            for (k, gv) in go {
                if SKIP_KEYS.contains(&k.as_str()) {
                    continue;
                }
                let sub = format!("{path}.{k}");
                match ao.get(k) {
                    Some(av) => compare_json(file, &sub, av, gv, diffs),
                    None => diffs.push(Difference {
                        file: file.into(),
                        location: sub,
                        actual: "<missing>".into(),
                        expected: gv.to_string(),
                    }),
                }
            }
        }
        (Value::Array(aa), Value::Array(ga)) => {
            if aa.len() != ga.len() {
                diffs.push(Difference {
                    file: file.into(),
                    location: format!("{path}.len"),
                    actual: aa.len().to_string(),
                    expected: ga.len().to_string(),
                });
                return;
            }
            for (i, (av, gv)) in aa.iter().zip(ga).enumerate() {
                compare_json(file, &format!("{path}[{i}]"), av, gv, diffs);
            }
        }
        (Value::Number(an), Value::Number(gn)) => {
            let (af, gf) = (an.as_f64().unwrap_or(f64::NAN), gn.as_f64().unwrap_or(f64::NAN));
            if !numbers_match(af, gf) {
                diffs.push(Difference {
                    file: file.into(),
                    location: path.into(),
                    actual: an.to_string(),
                    expected: gn.to_string(),
                });
            }
        }
        _ => {
            if a != g {
                diffs.push(Difference {
                    file: file.into(),
                    location: path.into(),
                    actual: a.to_string(),
                    expected: g.to_string(),
                });
            }
        }
    }
}

fn compare_csv(file: &str, actual: &str, golden: &str, diffs: &mut Vec<Difference>) {
    let rows_a: Vec<&str> = actual.lines().filter(|l| !l.starts_with('#')).collect();
    let rows_g: Vec<&str> = golden.lines().filter(|l| !l.starts_with('#')).collect();
    if rows_a.len() != rows_g.len() {
        diffs.push(Difference {
            file: file.into(),
            location: "rows".into(),
            actual: rows_a.len().to_string(),
            expected: rows_g.len().to_string(),
        });
        return;
    }
    for (i, (ra, rg)) in rows_a.iter().zip(&rows_g).enumerate() {
        let ca: Vec<&str> = ra.split(',').collect();
        let cg: Vec<&str> = rg.split(',').collect();
        if ca.len() != cg.len() {
            diffs.push(Difference {
                file: file.into(),
                location: format!("row {i}"),
                actual: format!("{} cells", ca.len()),
                expected: format!("{} cells", cg.len()),
            });
            continue;
        }
        for (j, (va, vg)) in ca.iter().zip(&cg).enumerate() {
            let same = match (va.parse::<f64>(), vg.parse::<f64>()) {
                (Ok(fa), Ok(fg)) => numbers_match(fa, fg),
                _ => va == vg,
            };
            if !same {
                diffs.push(Difference {
                    file: file.into(),
                    location: format!("row {i} col {j}"),
                    actual: (*va).to_string(),
                    expected: (*vg).to_string(),
                });
            }
        }
    }
}

pub fn list_scenarios() -> &'static [ScenarioInfo] {
    SCENARIOS
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "pucci-lab-test-{tag}-{}",
            std::process::id()
        ));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn liouville_scenario_runs_and_verifies_against_itself() {
        let cfg = ExperimentConfig::from_toml("scenario = \"liouville_disc\"").unwrap();
        let root = tmp_dir("liouville");
        let a = run(&cfg, Some(&root.join("a"))).unwrap();
        assert!(a.all_pass, "checks: {:?}", a.checks);
        let b = run(&cfg, Some(&root.join("b"))).unwrap();
        assert!(b.all_pass);

        // regenerated output verifies cleanly against itself
        let report = verify(&root.join("a"), &root.join("b")).unwrap();
        assert!(report.clean(), "diffs: {:?}", report.differences);
        assert!(report.files_compared >= 2);

        // a perturbed artifact is flagged
        let path = root.join("b").join("solution.csv");
        let text = std::fs::read_to_string(&path).unwrap();
        let perturbed = text.replacen("5.0", "5.1", 1);
        std::fs::write(&path, perturbed).unwrap();
        let report = verify(&root.join("a"), &root.join("b")).unwrap();
        assert!(!report.clean());

        let _ = std::fs::remove_dir_all(&root);
    }

    #[test]
    fn verify_requires_baseline() {
        let root = tmp_dir("missing-golden");
        let r = verify(&root, &root.join("nope"));
        assert!(matches!(r, Err(HarnessError::MissingBaseline(_))));
        let _ = std::fs::remove_dir_all(&root);
    }

    #[test]
    fn sweep_labels_match_the_case_split() {
        let cfg =
            ExperimentConfig::from_toml("scenario = \"exponent_probe\"").unwrap();
        let root = tmp_dir("sweep-labels");
        // combinations are cheap for the closed-form part of the check; the
        // probe itself runs per combination
        let entries = sweep(&cfg, &[1.5, 2.0, 3.0], &[2, 3, 4], &root).unwrap();
        assert_eq!(entries.len(), 9);
        for e in &entries {
            let n1 = (e.n - 1) as f64;
            let expected = if (e.big_lambda - n1).abs() < 1e-12 {
                "alpha_plus_zero"
            } else if e.big_lambda > n1 {
                "alpha_plus_negative"
            } else {
                "alpha_plus_positive"
            };
            assert_eq!(e.case_label, expected, "combo {:?}", (e.big_lambda, e.n));
            assert!(e.all_pass, "combo {:?}: {:?}", (e.big_lambda, e.n), e.error);
        }
        assert!(root.join("sweep.csv").exists());
        let _ = std::fs::remove_dir_all(&root);
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let cfg = ExperimentConfig::from_toml("scenario = \"exponent_probe\"").unwrap();
        let root = tmp_dir("sweep-empty");
        assert!(matches!(
            sweep(&cfg, &[], &[2], &root),
            Err(HarnessError::EmptySweep)
        ));
        let _ = std::fs::remove_dir_all(&root);
    }
}
