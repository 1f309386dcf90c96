//! Runs the `relay-ris` binary end to end.

use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_relay-ris"))
}

const SPEC: &str = r#"
seed = 5
trials = 2
scenarios = ["relay_only", "ris_only"]
output = "unused"

[sweep]
variable = "R_th"
values = [1.0, 2.0]

[system]
bs_antennas = 4
relay_antennas = 3
ris_elements = 4
users = 2
phase_bits = 1
"#;

#[test]
fn validate_accepts_good_spec_and_rejects_bad_one() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, SPEC).unwrap();
    let out = bin().arg("validate").arg(&good).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("8 rows"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, SPEC.replace("[1.0, 2.0]", "[2.0, 1.0]")).unwrap();
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("strictly increasing"));
}

#[test]
fn run_honours_flag_overrides_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(&spec, SPEC).unwrap();
    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let status = bin()
            .args(["run", spec.to_str().unwrap(), "--trials", "3", "--seed", "9", "--threads", "1", "--out"])
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(status.status.success());
        for f in ["results.csv", "aggregates.json", "plot.csv", "timings.csv"] {
            assert!(out_dir.join(f).exists(), "{f} missing");
        }
        csvs.push(fs::read(out_dir.join("results.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    // 2 values × 3 trials × 2 scenarios, plus the header.
    assert_eq!(String::from_utf8_lossy(&csvs[0]).lines().count(), 13);
}

#[test]
fn sweep_builds_spec_from_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "sweep", "--variable", "K", "--values", "1,2", "--scenarios", "relay_only",
            "--trials", "2", "--seed", "1", "--rate-threshold", "1.5",
        ])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(results.lines().skip(1).all(|l| l.starts_with("relay_only,users,")));
    assert_eq!(results.lines().count(), 5);
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let out = bin()
        .args(["sweep", "--variable", "K", "--values", "2", "--scenarios", "bogus"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn shipped_specs_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs");
    let mut count = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let out = bin().arg("validate").arg(&path).output().unwrap();
            assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
            count += 1;
        }
    }
    assert!(count >= 3);
}
