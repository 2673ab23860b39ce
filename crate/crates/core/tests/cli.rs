use std::path::Path;
use std::process::{Command, Output};

fn bb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boasbuck"))
        .args(args)
        .output()
        .unwrap()
}

fn systems_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../systems")
}

#[test]
fn validate_shipped_systems() {
    for name in ["exp1.json", "exp2.json"] {
        let out = bb(&["validate", systems_dir().join(name).to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
        assert!(String::from_utf8_lossy(&out.stdout).contains("admissible"));
    }
}

#[test]
fn theta_json() {
    let out = bb(&["theta", "builtin:exp1", "--y", "1", "--J", "4"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["values"][4].as_f64(), Some(0.125));
}

#[test]
fn moments_json() {
    let out = bb(&["moments", "builtin:exp1", "--n", "41", "--x", "1"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["mu2"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    assert!((v["durrmeyer_quadrature"][2].as_f64().unwrap() - 1.1).abs() < 1e-8);
}

#[test]
fn apply_and_error_exit() {
    let out = bb(&[
        "apply",
        "builtin:exp1",
        "--op",
        "szasz",
        "--fn",
        "one",
        "--n",
        "20",
        "--x",
        "2",
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("value"));
    let out = bb(&["apply", "builtin:exp1", "--fn", "bogus", "--n", "20", "--x", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    let out = bb(&["validate", "/nonexistent.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn experiment_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(
        &good,
        r#"{"system":"builtin:exp1","n_grid":[10,20,40],"x_grid":[0.5,1],"checks":[{"kind":"uniform","functions":["exp_neg"]}]}"#,
    )
    .unwrap();
    let csv = dir.path().join("out.csv");
    let out = bb(&["experiment", good.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 7);

    let strict = dir.path().join("strict.json");
    std::fs::write(
        &strict,
        r#"{"system":"builtin:exp1","n_grid":[10,20],"x_grid":[1],"checks":[{"kind":"uniform","functions":["exp_neg"],"tol":1e-9}]}"#,
    )
    .unwrap();
    let out = bb(&["experiment", strict.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[FAIL]"));

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, r#"{"system":"builtin:exp1","n_grid":[20,10]}"#).unwrap();
    let out = bb(&["experiment", broken.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
