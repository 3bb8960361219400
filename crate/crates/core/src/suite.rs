//! Benchmark suites: methods x scenarios x true counts, read from TOML.
//!
//! ```toml
//! reps = 50
//! true_counts = [2, 3]
//!
//! [[scenarios]]
//! name = "isotropic"
//! config = "scenario.toml"     # optional; inline sections override it
//! [scenarios.field]
//! n = 50
//!
//! [[methods]]
//! method = "baseline"
//! b = 0.3
//! sweep = [0.2, 0.25, 0.3]      # optional threshold sweep
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detectors::{
    default_rotation_solver, AveragedRotationsConfig, DetectorConfig, Method, Threshold, VarianceRatioConfig,
};
use crate::error::{Error, Result};
use crate::eval::{self, ConfusionMatrix, TrialRecord, DEFAULT_CLASSES, F1_CLASSES};
use crate::fields::FieldConfig;
use crate::rotation::default_angles;
use crate::scenario::{Scenario, SamplingConfig, SourcesConfig};
use crate::stats::TestSide;

/// Detector parameters as they appear in suites and on the command line.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    /// Label used for output directories; defaults to the method name.
    pub name: Option<String>,
    pub method: String,
    pub b: Option<f64>,
    pub alpha: Option<f64>,
    pub r_max: Option<usize>,
    pub c: Option<usize>,
    #[serde(rename = "L")]
    pub steps: Option<usize>,
    pub rotate: Option<bool>,
    pub two_sided: Option<bool>,
    /// Leading singular values kept by the averaged-rotations detector.
    pub n: Option<usize>,
    /// Number of equispaced angles `D`.
    pub angles: Option<usize>,
    pub reg: Option<f64>,
    pub max_iters: Option<usize>,
    pub sweep: Option<Vec<f64>>,
}

impl MethodSpec {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.method.clone())
    }

    pub fn parsed_method(&self) -> Result<Method> {
        self.method.parse()
    }

    pub fn to_detector(&self) -> Result<DetectorConfig> {
        let method = self.parsed_method()?;
        if self.b.is_some() && self.alpha.is_some() {
            return Err(Error::Parameter("give either b or alpha, not both".into()));
        }
        if method != Method::VarianceRatio {
            for (flag, set) in [
                ("alpha", self.alpha.is_some()),
                ("r_max", self.r_max.is_some()),
                ("c", self.c.is_some()),
                ("L", self.steps.is_some()),
                ("rotate", self.rotate.is_some()),
                ("two_sided", self.two_sided.is_some()),
            ] {
                if set {
                    return Err(Error::Parameter(format!("{flag} only applies to variance_ratio")));
                }
            }
        }
        if method != Method::AveragedRotations && self.n.is_some() {
            return Err(Error::Parameter("n only applies to averaged_rotations".into()));
        }
        if method == Method::Baseline && (self.angles.is_some() || self.reg.is_some()) {
            return Err(Error::Parameter("baseline takes no angles or reg".into()));
        }
        let mut solver = default_rotation_solver();
        if let Some(m) = self.max_iters {
            solver.max_iters = m;
        }
        let angles = default_angles(self.angles.unwrap_or(20));
        Ok(match method {
            Method::Baseline => DetectorConfig::Baseline { b: self.b.unwrap_or(0.42) },
            Method::AveragedRotations => DetectorConfig::AveragedRotations(AveragedRotationsConfig {
                n: self.n.unwrap_or(20),
                angles,
                b: self.b.unwrap_or(0.8),
                reg: self.reg,
                solver,
            }),
            Method::VarianceRatio => {
                let d = VarianceRatioConfig::default();
                DetectorConfig::VarianceRatio(VarianceRatioConfig {
                    r_max: self.r_max.unwrap_or(d.r_max),
                    c: self.c.unwrap_or(d.c),
                    steps: self.steps.unwrap_or(d.steps),
                    threshold: match (self.b, self.alpha) {
                        (Some(b), _) => Threshold::Fixed(b),
                        (None, Some(a)) => Threshold::Alpha(a),
                        (None, None) => d.threshold,
                    },
                    side: if self.two_sided.unwrap_or(false) { TestSide::TwoSided } else { TestSide::Upper },
                    use_rotation: self.rotate.unwrap_or(false),
                    angles,
                    rotation_reg: self.reg,
                    rotation_solver: solver,
                    ..d
                })
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    /// Scenario file, relative to the suite file.
    pub config: Option<PathBuf>,
    pub field: Option<FieldConfig>,
    pub sources: Option<SourcesConfig>,
    pub sampling: Option<SamplingConfig>,
}

impl ScenarioSpec {
    pub fn resolve(&self, base: &Path) -> Result<Scenario> {
        let mut s = match &self.config {
            Some(p) => Scenario::from_file(&base.join(p))?,
            None => Scenario::default(),
        };
        if let Some(f) = &self.field {
            s.field = f.clone();
        }
        if let Some(src) = &self.sources {
            s.sources = src.clone();
        }
        if let Some(smp) = &self.sampling {
            s.sampling = smp.clone();
        }
        s.validate()?;
        Ok(s)
    }
}

fn default_true_counts() -> Vec<usize> {
    vec![2, 3]
}

fn default_classes() -> Vec<usize> {
    DEFAULT_CLASSES.to_vec()
}

fn default_f1_classes() -> Vec<usize> {
    F1_CLASSES.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub reps: usize,
    #[serde(default = "default_true_counts")]
    pub true_counts: Vec<usize>,
    #[serde(default = "default_classes")]
    pub classes: Vec<usize>,
    #[serde(default = "default_f1_classes")]
    pub f1_classes: Vec<usize>,
    #[serde(default)]
    pub scenarios: Vec<ScenarioSpec>,
    #[serde(default)]
    pub methods: Vec<MethodSpec>,
}

impl SuiteConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        let cfg: SuiteConfig = toml::from_str(text).map_err(|e| crate::scenario::toml_error(e, text, path))?;
        if cfg.methods.is_empty() {
            return Err(Error::Parameter("suite lists no methods".into()));
        }
        if cfg.scenarios.is_empty() {
            return Err(Error::Parameter("suite lists no scenarios".into()));
        }
        if cfg.reps == 0 {
            return Err(Error::Parameter("reps must be at least 1".into()));
        }
        if cfg.true_counts.is_empty() {
            return Err(Error::Parameter("true_counts is empty".into()));
        }
        for m in &cfg.methods {
            m.to_detector().map_err(|e| Error::Parameter(format!("method '{}': {e}", m.label())))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub b: f64,
    pub f1: f64,
    pub diagonal_mass: f64,
}

/// Outcome for one (method, scenario) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub method: String,
    pub scenario: String,
    pub f1: f64,
    pub diagonal_mass: f64,
    pub confusion: ConfusionMatrix,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub sweep: Vec<SweepPoint>,
}

pub fn records_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from("true_count,rep,status,r_hat,error\n");
    for r in records {
        let (status, r_hat) = match r.outcome {
            eval::TrialOutcome::Estimate(k) => ("estimate", k.to_string()),
            eval::TrialOutcome::Inconclusive => ("inconclusive", String::new()),
            eval::TrialOutcome::Failed => ("failed", String::new()),
        };
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(out, "{},{},{status},{r_hat},{err}", r.true_count, r.rep);
    }
    out
}

fn sweep_points(
    spec: &MethodSpec,
    detector: &DetectorConfig,
    scenario: &Scenario,
    suite: &SuiteConfig,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    let Some(grid) = &spec.sweep else {
        return Ok(Vec::new());
    };
    let tc = &suite.true_counts;
    let mats = match detector {
        DetectorConfig::Baseline { .. } => eval::sweep_baseline(scenario, tc, suite.reps, seed, grid)?,
        DetectorConfig::AveragedRotations(cfg) => {
            let curves = eval::trial_curves(scenario, tc, suite.reps, seed, |t| {
                let sums = crate::detectors::averaged_spectrum(&t.observations, cfg)?;
                Ok(crate::detectors::cumulative_fractions(&sums, cfg.n).unwrap_or_default())
            })?;
            eval::sweep(&curves, tc, grid, |f, b| eval::fraction_outcome(f, b))?
        }
        DetectorConfig::VarianceRatio(cfg) => {
            let curves = eval::trial_curves(scenario, tc, suite.reps, seed, |t| {
                let c = VarianceRatioConfig {
                    seed: crate::rng::derive_seed(t.seed, &[3]),
                    ..cfg.clone()
                };
                crate::detectors::variance_ratio_profile(&t.observations, &c).map(|p| p.0)
            })?;
            eval::sweep(&curves, tc, grid, |r, b| eval::ratio_outcome(r, b))?
        }
    };
    Ok(mats
        .into_iter()
        .map(|(b, cm)| SweepPoint {
            b,
            f1: eval::macro_f1(&cm, &suite.f1_classes),
            diagonal_mass: cm.diagonal_mass(),
        })
        .collect())
}

/// Runs every pair, writing `<method>__<scenario>/` directories under `out`
/// when given.
pub fn run_suite(suite: &SuiteConfig, base: &Path, seed: u64, out: Option<&Path>) -> Result<Vec<PairResult>> {
    let mut results = Vec::new();
    for sc in &suite.scenarios {
        let scenario = sc.resolve(base)?;
        for spec in &suite.methods {
            let detector = spec.to_detector()?;
            log::info!("running {} on {}", spec.label(), sc.name);
            let records = eval::run_trials_detailed(&scenario, &detector, &suite.true_counts, suite.reps, seed)?;
            let mut cm = ConfusionMatrix::new(&suite.true_counts, &suite.classes);
            for r in &records {
                cm.record(r.true_count, &r.outcome)?;
            }
            let sweep = sweep_points(spec, &detector, &scenario, suite, seed)?;
            let pair = PairResult {
                method: spec.label(),
                scenario: sc.name.clone(),
                f1: eval::macro_f1(&cm, &suite.f1_classes),
                diagonal_mass: cm.diagonal_mass(),
                confusion: cm,
                sweep,
            };
            if let Some(out) = out {
                let dir = out.join(format!("{}__{}", pair.method, pair.scenario));
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("confusion.csv"), pair.confusion.to_csv())?;
                std::fs::write(dir.join("trials.csv"), records_csv(&records))?;
                std::fs::write(dir.join("result.json"), serde_json::to_string_pretty(&pair)? + "\n")?;
                if !pair.sweep.is_empty() {
                    let mut csv = String::from("b,f1,diagonal_mass\n");
                    for p in &pair.sweep {
                        let _ = writeln!(csv, "{},{},{}", p.b, p.f1, p.diagonal_mass);
                    }
                    std::fs::write(dir.join("sweep.csv"), csv)?;
                }
            }
            results.push(pair);
        }
    }
    if let Some(out) = out {
        let mut csv = String::from("method,scenario,f1,diagonal_mass\n");
        for r in &results {
            let _ = writeln!(csv, "{},{},{},{}", r.method, r.scenario, r.f1, r.diagonal_mass);
        }
        std::fs::write(out.join("summary.csv"), csv)?;
        let summary: Vec<serde_json::Value> = results
            .iter()
            .map(|r| {
                serde_json::json!({
                    "method": r.method,
                    "scenario": r.scenario,
                    "f1": r.f1,
                    "diagonal_mass": r.diagonal_mass,
                })
            })
            .collect();
        std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SUITE: &str = r#"
reps = 2
true_counts = [2, 3]

[[scenarios]]
name = "tiny"
[scenarios.field]
n = 16
[scenarios.sampling]
sensor_count = 150

[[methods]]
method = "baseline"
b = 0.3
sweep = [0.2, 0.3]
"#;

    #[test]
    fn parse_and_run_suite() {
        let suite = SuiteConfig::from_toml_str(SUITE, Path::new("s.toml")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let res = run_suite(&suite, Path::new("."), 5, Some(dir.path())).unwrap();
        assert_eq!(res.len(), 1);
        assert_eq!(res[0].sweep.len(), 2);
        assert!(res[0].confusion.is_conserved());
        assert!(dir.path().join("baseline__tiny/confusion.csv").exists());
        assert!(dir.path().join("summary.json").exists());
        let again = run_suite(&suite, Path::new("."), 5, None).unwrap();
        assert_eq!(again[0].confusion, res[0].confusion);
    }

    #[test]
    fn rejects_empty_methods_and_bad_specs() {
        let none = SUITE.split("[[methods]]").next().unwrap();
        assert!(matches!(SuiteConfig::from_toml_str(none, Path::new("s.toml")), Err(Error::Parameter(_))));
        let bad = SUITE.replace("method = \"baseline\"", "method = \"nope\"");
        assert!(SuiteConfig::from_toml_str(&bad, Path::new("s.toml")).is_err());
        let mixed = MethodSpec {
            method: "baseline".into(),
            alpha: Some(0.05),
            ..Default::default()
        };
        assert!(mixed.to_detector().is_err());
    }

    #[test]
    fn method_spec_defaults() {
        let vr = MethodSpec {
            method: "variance_ratio".into(),
            ..Default::default()
        };
        match vr.to_detector().unwrap() {
            DetectorConfig::VarianceRatio(c) => {
                assert_eq!((c.r_max, c.c, c.steps), (4, 2, 750));
                assert_eq!(c.threshold, Threshold::Alpha(0.05));
            }
            other => panic!("{other:?}"),
        }
    }
}
