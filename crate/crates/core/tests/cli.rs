use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_csbn");

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).env("CSBN_JOBS", "1").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("terminated by signal")
}

fn simulate(dir: &Path, seed: &str) {
    let o = run(&["simulate", "--p", "4", "--n-per-node", "25", "--tau", "0.9", "--seed", seed, "--out", "sim"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_writes_bundle_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate(a.path(), "7");
    simulate(b.path(), "7");
    for f in ["data.csv", "interventions.txt", "b_true.csv", "sigma_u.csv", "manifest.json"] {
        let x = fs::read(a.path().join("sim").join(f)).unwrap();
        let y = fs::read(b.path().join("sim").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs with the same seed");
    }
    let c = tempfile::tempdir().unwrap();
    simulate(c.path(), "8");
    assert_ne!(
        fs::read(a.path().join("sim/data.csv")).unwrap(),
        fs::read(c.path().join("sim/data.csv")).unwrap()
    );
}

#[test]
fn estimate_then_evaluate() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), "3");
    let before = fs::read(d.path().join("sim/data.csv")).unwrap();
    let args = [
        "estimate", "--data", "sim/data.csv", "--interventions", "sim/interventions.txt",
        "--sigma-u", "sim/sigma_u.csv", "--method", "nps", "--out", "fit",
    ];
    let o = run(&args, d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(before, fs::read(d.path().join("sim/data.csv")).unwrap(), "input was modified");
    let first = fs::read(d.path().join("fit/fit.json")).unwrap();
    assert_eq!(code(&run(&args, d.path())), 0);
    assert_eq!(first, fs::read(d.path().join("fit/fit.json")).unwrap());

    let o = run(&["evaluate", "--truth", "sim/b_true.csv", "--estimate", "fit/fit.json"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.get("tpr").is_some(), "{v}");
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    // usage
    assert_eq!(code(&run(&["simulate"], p)), 2);
    assert_eq!(code(&run(&["bogus"], p)), 2);
    assert_eq!(code(&run(&["simulate", "--p", "3", "--edges", "9", "--out", "x"], p)), 2);

    // data
    fs::write(p.join("ragged.csv"), "a,b\n1,2\n3\n").unwrap();
    assert_eq!(code(&run(&["estimate", "--data", "ragged.csv", "--method", "pcd-naive"], p)), 3);
    assert_eq!(code(&run(&["estimate", "--data", "missing.csv", "--method", "pcd-naive"], p)), 3);

    // numerical: a constant-zero column leaves a zero residual for the naive likelihood
    let mut s = String::from("a,b,c\n");
    for k in 0..30 {
        let x = (k as f64 * 0.7).sin();
        let y = (k as f64 * 1.3).cos();
        s.push_str(&format!("{x},{y},0\n"));
    }
    fs::write(p.join("zero.csv"), s).unwrap();
    let o = run(&["estimate", "--data", "zero.csv", "--method", "pcd-naive", "--lambda", "0.1", "--out", "o"], p);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_supplies_defaults_and_flags_override() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("cfg.json"),
        r#"{"seed": 11, "simulate": {"p": 5, "n_per_node": 20, "out": "from_cfg"}}"#,
    )
    .unwrap();
    assert_eq!(code(&run(&["simulate", "--config", "cfg.json"], d.path())), 0);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("from_cfg/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["p"], 5);
    assert_eq!(m["seed"], 11);

    assert_eq!(code(&run(&["simulate", "--config", "cfg.json", "--p", "6", "--out", "cli"], d.path())), 0);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("cli/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["p"], 6);
    assert_eq!(m["seed"], 11);
}
