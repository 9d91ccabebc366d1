use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn wcoord(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wcoord")).args(args).output().expect("binary runs")
}

fn config(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(rel)
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    fs::write(&p, text).unwrap();
    p
}

const TINY: &str = r#"
schema_version = 1
name = "example1"
seed = 3
particles = 10
trials = 3
budget = 40
"#;

#[test]
fn run_writes_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = wcoord(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["wgd.csv", "rwcd_trial000.csv", "rwcd_trial002.csv", "rwcd_aggregate.csv", "summary.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let csv = fs::read_to_string(out.join("wgd.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("work,energy,grad_norm_sq,running_min_grad_norm_sq,barycenter_norm"));
    assert_eq!(lines.next().unwrap().split(',').next(), Some("0"));
    assert_eq!(csv.lines().last().unwrap().split(',').next(), Some("40"));

    let text = fs::read_to_string(out.join("summary.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["partial"], false);
    assert_eq!(serde_json::to_string_pretty(&v).unwrap() + "\n", text);
}

#[test]
fn single_trial_band_equals_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = wcoord(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--set", "trials=1"]);
    assert!(o.status.success());
    let trace = fs::read_to_string(out.join("rwcd_trial000.csv")).unwrap();
    let agg = fs::read_to_string(out.join("rwcd_aggregate.csv")).unwrap();
    for (t, a) in trace.lines().skip(1).zip(agg.lines().skip(1)) {
        let t: Vec<&str> = t.split(',').collect();
        let a: Vec<&str> = a.split(',').collect();
        assert_eq!(t[0], a[0]);
        for f in 1..5 {
            let k = 1 + 3 * (f - 1);
            assert_eq!(&a[k..k + 3], &[t[f]; 3]);
        }
    }
}

#[test]
fn config_errors_exit_two() {
    assert_eq!(wcoord(&["run", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "schema_version = 1\nname = \"example1\"\nbogus = 4\n");
    let o = wcoord(&["constants", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    let cfg = write_config(dir.path(), TINY);
    let o = wcoord(&["constants", "--config", cfg.to_str().unwrap(), "--set", "problem.nope=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(wcoord(&["check", "nope"]).status.code(), Some(2));
}

#[test]
fn divergence_exits_three_with_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{TINY}wgd_step = 5.0\nmethods = [\"wgd\"]\n"));
    let out = dir.path().join("out");
    let o = wcoord(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(v["partial"], true);
    assert!(out.join("wgd.csv").exists());
}

#[test]
fn constants_match_known_values() {
    let o = wcoord(&["constants", "--config", config("example1.toml").to_str().unwrap()]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let p = v["schedules"]["rwcd"]["p"].as_array().unwrap();
    assert!((p[0].as_f64().unwrap() - 0.99900).abs() < 5e-6);
    assert!((p[1].as_f64().unwrap() - 0.00100).abs() < 5e-6);

    let o = wcoord(&["constants", "--config", config("example3.toml").to_str().unwrap()]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let l: Vec<f64> = serde_json::from_value(v["l_coord"].clone()).unwrap();
    assert_eq!(l.len(), 50);
    assert!((l[0] - 4e-3).abs() < 1e-15 && (l[49] - 4.0).abs() < 1e-12);

    let o = wcoord(&["constants", "--config", config("example4.toml").to_str().unwrap()]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let eta: Vec<f64> = serde_json::from_value(v["eta"].clone()).unwrap();
    let c = v["complexity_constant"].as_f64().unwrap();
    assert!((c - 8.0 * eta.iter().sum::<f64>()).abs() <= 1e-9 * c);
}

#[test]
fn check_suites_report_pass() {
    for args in [
        vec!["check", "fd-grad", "--scale", "small"],
        vec!["check", "descent-identity"],
        vec!["check", "smoothness", "--functional", "example5"],
    ] {
        let o = wcoord(&args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stdout));
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(v["pass"], true);
    }
}
