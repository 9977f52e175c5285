use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

const SUBCOMMANDS: [&str; 8] = [
    "calibrate",
    "tuning-curve",
    "steps",
    "perturb",
    "vapor",
    "bandwidth",
    "simulate",
    "fit",
];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wgmopo"))
}

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn small() -> PathBuf {
    manifest("tests/data/small.json")
}

fn run(args: &[&str], scenario: &Path, out: &Path) -> Output {
    bin().args(args).arg("--scenario").arg(scenario).arg("--out").arg(out).output().unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|e| panic!("stderr not JSON ({e}): {}", String::from_utf8_lossy(&o.stderr)))
}

#[test]
fn help_matches_golden() {
    let top = bin().arg("--help").output().unwrap();
    assert!(top.status.success());
    assert_eq!(String::from_utf8(top.stdout).unwrap(), std::fs::read_to_string(manifest("tests/golden/wgmopo.txt")).unwrap());
    for c in SUBCOMMANDS {
        let o = bin().args([c, "--help"]).output().unwrap();
        assert!(o.status.success(), "{c}");
        let golden = std::fs::read_to_string(manifest(&format!("tests/golden/{c}.txt"))).unwrap();
        assert_eq!(String::from_utf8(o.stdout).unwrap(), golden, "{c} --help drifted");
    }
}

#[test]
fn version_flag() {
    let o = bin().arg("--version").output().unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn unknown_flag_is_usage_error() {
    let o = bin().args(["calibrate", "--no-such-flag"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"]["kind"], "usage");
    let o = bin().arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn even_bin_count_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--bins", "100"], &small(), tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"]["kind"], "usage");
}

fn mutated(edit: impl FnOnce(&mut Value)) -> tempfile::NamedTempFile {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(small()).unwrap()).unwrap();
    edit(&mut v);
    let f = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(f.path(), serde_json::to_string(&v).unwrap()).unwrap();
    f
}

#[test]
fn bad_scenarios_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        mutated(|v| {
            v["surprise"] = Value::from(1);
        }),
        mutated(|v| {
            v["schema_version"] = Value::from(99);
        }),
        mutated(|v| {
            v["name"] = Value::from("../escape");
        }),
        mutated(|v| {
            v["tuning"]["temperature_range_c"] = serde_json::json!([150.0, 140.0]);
        }),
    ];
    for f in &cases {
        let o = run(&["calibrate"], f.path(), tmp.path());
        assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stderr_json(&o)["error"]["kind"], "scenario");
    }
    assert!(std::fs::read_dir(tmp.path()).unwrap().next().is_none());
}

#[test]
fn missing_scenario_is_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["calibrate"], &tmp.path().join("nope.json"), tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"]["kind"], "io");
}

#[test]
fn outputs_carry_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(&["steps"], &small(), &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sha: String = Sha256::digest(std::fs::read(small()).unwrap()).iter().map(|b| format!("{b:02x}")).collect();
    let csv = std::fs::read_to_string(out.join("steps.csv")).unwrap();
    let first = csv.lines().next().unwrap();
    assert!(first.starts_with('#'));
    assert!(first.contains(&sha) && first.contains(env!("CARGO_PKG_VERSION")), "{first}");
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("steps_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["meta"]["scenario_sha256"], sha.as_str());
    assert_eq!(summary["meta"]["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn json_format_for_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["bandwidth", "--format", "json"], &small(), tmp.path());
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("bandwidth.json")).unwrap()).unwrap();
    assert!(v["rows"].as_array().is_some_and(|r| r.len() == 101));
    assert!(!tmp.path().join("bandwidth.csv").exists());
}

#[test]
fn writes_stay_inside_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for c in ["calibrate", "tuning-curve", "steps", "perturb", "vapor", "bandwidth", "simulate"] {
        let o = run(&[c], &small(), &out);
        assert!(o.status.success(), "{c}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = run(&["fit", "--kind", "fluorescence", "--input"], &small(), &out);
    assert_eq!(o.status.code(), Some(2));
    let o = bin()
        .args(["fit", "--kind", "fluorescence", "--scenario"])
        .arg(small())
        .arg("--out")
        .arg(&out)
        .arg("--input")
        .arg(out.join("hist_fluorescence.csv"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let top: Vec<_> = std::fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(top, vec![std::ffi::OsString::from("out")]);
    let names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    for expected in [
        "calibration.json",
        "tuning_curve.csv",
        "steps.csv",
        "perturb.csv",
        "perturb_plans.json",
        "vapor_cs.csv",
        "bandwidth.csv",
        "hist_direct.csv",
        "hist_fluorescence.csv",
        "streams_direct.csv",
        "sim_fluorescence.json",
        "fit_hist_fluorescence.json",
    ] {
        assert!(names.iter().any(|n| n == expected), "missing {expected} in {names:?}");
    }
    assert!(names.iter().all(|n| !n.starts_with('.')), "temp files left: {names:?}");
}

#[test]
fn data_dir_override() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin()
        .env("WGMOPO_DATA_DIR", tmp.path().join("empty"))
        .args(["calibrate", "--scenario"])
        .arg(small())
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr_json(&o)["error"]["message"].as_str().unwrap().to_string();
    assert!(msg.contains("empty"), "{msg}");

    let data = manifest("../core/data");
    let o = bin()
        .env("WGMOPO_DATA_DIR", &data)
        .args(["calibrate", "--scenario"])
        .arg(small())
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert!(o.status.success());
}

#[test]
fn fit_recovers_simulated_lifetime() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--seed", "3"], &small(), tmp.path());
    assert!(o.status.success());
    let o = bin()
        .args(["fit", "--kind", "direct", "--scenario"])
        .arg(small())
        .arg("--out")
        .arg(tmp.path())
        .arg("--input")
        .arg(tmp.path().join("hist_direct.csv"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("fit_hist_direct.json")).unwrap()).unwrap();
    let tau = v["result"]["params"]["tau_si"].as_f64().unwrap();
    let sigma = v["result"]["sigmas"]["tau_si"].as_f64().unwrap();
    let truth = 9.4e-9;
    assert!((tau - truth).abs() < 4.0 * sigma, "{tau} ± {sigma}");
}
