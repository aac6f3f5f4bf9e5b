use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn oqsim(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oqsim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path, name: &str) -> Value {
    let text = std::fs::read_to_string(dir.join(name)).expect("summary written");
    serde_json::from_str(&text).expect("valid json")
}

#[test]
fn bundled_relax_reproduces_t1() {
    let dir = tempfile::tempdir().unwrap();
    let out = oqsim(&["relax"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path(), "relax_summary.json");
    let r1 = s["result"]["t1_ratio"].as_f64().unwrap();
    let r2 = s["result"]["t2_ratio"].as_f64().unwrap();
    assert!((0.95..=1.05).contains(&r1), "T1/T1_exact = {r1}");
    assert!((1.90..=2.10).contains(&r2), "T2/T1_exact = {r2}");
    let csv = std::fs::read_to_string(dir.path().join("relax_rho_ee.csv")).unwrap();
    assert!(csv.starts_with("t,rho_ee,rho_ee_oracle,"));
    assert_eq!(s["manifest"]["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn resources_for_eight_modes() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "resources",
        "--override",
        "evolution.mode=joint",
        "--override",
        "evolution.steps=100",
        "--override",
        "evolution.n0=10",
    ];
    let out = oqsim(&args, dir.path());
    assert!(out.status.success());
    let s = summary(dir.path(), "resources_summary.json");
    assert_eq!(s["result"]["approach1_qubits"], 11);
    assert!(s["result"]["approach2"].is_null());

    let out = oqsim(&["resources", "--override", "evolution.subset_size=1"], dir.path());
    assert!(out.status.success());
    let s = summary(dir.path(), "resources_summary.json");
    assert_eq!(s["result"]["approach2"]["qubits"], 4);
}

#[test]
fn negative_tau_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = oqsim(&["relax", "--override", "evolution.tau=-30"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("evolution.tau"));
    assert!(!dir.path().join("relax_summary.json").exists());
}

#[test]
fn malformed_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for bad in ["bath.colour=3", "evolution.mode=diagonal", "nonsense"] {
        let out = oqsim(&["relax", "--override", bad], dir.path());
        assert_eq!(out.status.code(), Some(2), "{bad}");
    }
    let cfg = dir.path().join("broken.toml");
    std::fs::write(&cfg, "[system\nomega_s = 1").unwrap();
    let out = oqsim(&["relax", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn negative_strict_couplings_are_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = oqsim(&["relax", "--override", "bath.couplings=improved"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

fn run_in(dir: &Path, threads: &str) {
    let out = Command::new(env!("CARGO_BIN_EXE_oqsim"))
        .env("OQSIM_THREADS", threads)
        .args([
            "relax",
            "--seed",
            "17",
            "--override",
            "evolution.backend=trajectories",
            "--override",
            "evolution.trajectories=24",
            "--override",
            "evolution.steps=4",
            "--override",
            "evolution.mode=joint",
            "--override",
            "readout.mode=shots",
        ])
        .arg("--out")
        .arg(dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_in(a.path(), "1");
    run_in(b.path(), "4");
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 3);
    for name in names {
        let x = std::fs::read(a.path().join(&name)).unwrap();
        let y = std::fs::read(b.path().join(&name)).unwrap();
        if name.to_string_lossy().ends_with(".json") {
            // the manifest echoes the output directory
            let strip = |v: &[u8]| {
                let mut j: Value = serde_json::from_slice(v).unwrap();
                j["manifest"]["config"] = Value::Null;
                j["manifest"]["config_sha256"] = Value::Null;
                j
            };
            assert_eq!(strip(&x), strip(&y));
        } else {
            assert_eq!(x, y, "{name:?} differs");
        }
    }
    let s = summary(a.path(), "relax_summary.json");
    assert_eq!(s["manifest"]["seed"], 17);
}

#[test]
fn identical_invocations_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["dephase", "--override", "noise.realizations=40", "--override", "noise.spectrum_duration=500"];
    let read_all = |p: &Path| {
        let mut v: Vec<_> = std::fs::read_dir(p)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        v.sort();
        v
    };
    assert!(oqsim(&args, dir.path()).status.success());
    let first = read_all(dir.path());
    assert!(oqsim(&args, dir.path()).status.success());
    assert_eq!(first, read_all(dir.path()));
}
