use std::path::Path;
use std::process::{Command, Output};

fn rankscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankscope"))
        .args(args)
        .env_remove("RANKSCOPE_SEED")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SCENARIO: &str = r#"
[field]
n = 30

[sources]
kind = "isotropic"
count = 4

[sampling]
sensor_count = 400
"#;

fn write_scenario(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, SCENARIO).unwrap();
    path
}

#[test]
fn generate_writes_files_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = rankscope(&["generate", "--config", p(&cfg), "--seed", "11", "--out", p(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["truth.csv", "observations.csv", "sources.json", "manifest.json"] {
        assert!(a.join(f).exists(), "{f} missing");
    }
    let obs = std::fs::read(a.join("observations.csv")).unwrap();
    assert_eq!(obs, std::fs::read(b.join("observations.csv")).unwrap());
    let parsed = rankscope::io::read_observations(&a.join("observations.csv")).unwrap();
    assert!(parsed.len() <= 400);
    let sources: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("sources.json")).unwrap()).unwrap();
    assert_eq!(sources.as_array().unwrap().len(), 4);
}

#[test]
fn seed_env_fallback_matches_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path());
    let flag = dir.path().join("flag");
    let env = dir.path().join("env");
    rankscope(&["generate", "--config", p(&cfg), "--seed", "5", "--out", p(&flag)]);
    let o = Command::new(env!("CARGO_BIN_EXE_rankscope"))
        .args(["generate", "--config", p(&cfg), "--out", p(&env)])
        .env("RANKSCOPE_SEED", "5")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        std::fs::read(flag.join("observations.csv")).unwrap(),
        std::fs::read(env.join("observations.csv")).unwrap()
    );
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(env.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 5);
}

#[test]
fn malformed_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[field]\nn = 30\n[sampling]\nsensor_count = \"many\"\n").unwrap();
    let o = rankscope(&["generate", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml:4"), "{err}");
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(json["error"]["kind"], "config");
}

fn generated_obs(dir: &Path, count: &str) -> std::path::PathBuf {
    let cfg = write_scenario(dir);
    let out = dir.join("gen");
    let o = rankscope(&["generate", "--config", p(&cfg), "--count", count, "--seed", "2", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0));
    out.join("observations.csv")
}

#[test]
fn detect_baseline_json() {
    let dir = tempfile::tempdir().unwrap();
    let obs = generated_obs(dir.path(), "2");
    let out = dir.path().join("det");
    let o = rankscope(&["detect", p(&obs), "--method", "baseline", "--b", "0.42", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(json["method"], "baseline");
    assert!(json["r_hat"].as_u64().unwrap() >= 1);
    assert_eq!(json["threshold_used"], 0.42);
    let saved: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("decision.json")).unwrap()).unwrap();
    assert_eq!(saved, json);
}

#[test]
fn detect_variance_ratio_echoes_alpha_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let obs = generated_obs(dir.path(), "1");
    let o = rankscope(&[
        "detect", p(&obs), "--method", "variance_ratio", "--alpha", "0.05", "--c", "2", "--L", "40", "--r-max", "2",
        "--out", p(&dir.path().join("det")),
    ]);
    let code = o.status.code().unwrap();
    assert!(code == 0 || code == 2, "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let expected = rankscope::stats::threshold(2, 40, 0.05).unwrap();
    assert!((json["threshold_used"].as_f64().unwrap() - expected).abs() < 1e-12);
    assert_eq!(json["alpha"], 0.05);
    assert_eq!(code == 2, json["inconclusive"].as_bool().unwrap());
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let obs = generated_obs(dir.path(), "2");
    let o = rankscope(&["detect", p(&obs), "--method", "nope"]);
    assert_eq!(o.status.code(), Some(64));
    let o = rankscope(&["detect", p(&obs), "--b", "1.5", "--alpha", "0.05"]);
    assert_eq!(o.status.code(), Some(64));
    let o = rankscope(&["validate", "--reps", "10"]);
    assert_eq!(o.status.code(), Some(64));
    let o = rankscope(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn detect_missing_file_fails_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = rankscope(&["detect", p(&dir.path().join("none.csv")), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(json["error"]["kind"], "io");
}

#[test]
fn validate_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("val");
    let o = rankscope(&["validate", "--c", "20", "--L", "150", "--reps", "400", "--seed", "1", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    let v = report["ratio"]["sample_variance"].as_f64().unwrap();
    assert!((v / 0.003667 - 1.0).abs() < 0.3, "variance {v}");
    assert!((report["split"]["target_variance"].as_f64().unwrap() - 0.005).abs() < 1e-12);
    let qq = std::fs::read_to_string(out.join("ratio_qq.csv")).unwrap();
    assert_eq!(qq.lines().count(), 401);
    assert!(out.join("split_qq.csv").exists());
}

const SUITE: &str = r#"
reps = 3
true_counts = [2, 3]

[[scenarios]]
name = "iso"
config = "scenario.toml"
[scenarios.sampling]
sensor_count = 500

[[methods]]
method = "baseline"
b = 0.42
sweep = [0.3, 0.42]

[[methods]]
name = "ar"
method = "averaged_rotations"
b = 0.8
angles = 4
max_iters = 50
"#;

#[test]
fn benchmark_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    write_scenario(dir.path());
    let suite = dir.path().join("suite.toml");
    std::fs::write(&suite, SUITE).unwrap();
    let out = dir.path().join("bench");
    let o = rankscope(&["benchmark", "--config", p(&suite), "--seed", "4", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    let rows = summary.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["f1"].as_f64().is_some()));
    for d in ["baseline__iso", "ar__iso"] {
        assert!(out.join(d).join("confusion.csv").exists());
        assert!(out.join(d).join("result.json").exists());
    }
    assert!(out.join("baseline__iso/sweep.csv").exists());

    let again = dir.path().join("again");
    let o = rankscope(&["replay", p(&out.join("manifest.json")), "--out", p(&again)]);
    assert_eq!(o.status.code(), Some(0));
    for f in ["baseline__iso/confusion.csv", "ar__iso/confusion.csv", "summary.csv"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn benchmark_without_methods_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.toml");
    std::fs::write(&suite, "reps = 2\n[[scenarios]]\nname = \"x\"\n").unwrap();
    let o = rankscope(&["benchmark", "--config", p(&suite), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for f in ["isotropic_desk.toml", "colinear_full.toml"] {
        rankscope::scenario::Scenario::from_file(&dir.join(f)).unwrap();
    }
    let suite = rankscope::suite::SuiteConfig::from_file(&dir.join("desk_suite.toml")).unwrap();
    for sc in &suite.scenarios {
        sc.resolve(&dir).unwrap();
    }
}
