use mhd_core::convergence::SweepEntry;
use mhd_lab::{cmd_check, cmd_run, cmd_sweep, write_sweep_outputs};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = r#"{
  "grid": {"nx": 16, "ny": 15},
  "run": {"dt": 0.01, "t_end": 0.2, "a": 0.5, "lambda": 4.0},
  "data": {"delta": 0.001, "profile": "mode1"}
}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mhdlab"))
}

#[test]
fn zero_data_run_is_healthy_with_zero_norms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "zero.json", &SMALL.replace("0.001", "0.0"));
    let out = dir.path().join("out");
    cmd_run(&cfg, &out, None, None).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("zero/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["health"]["healthy"], true);
    let csv = fs::read_to_string(out.join("zero/norms.csv")).unwrap();
    for line in csv.lines().skip(1).filter(|l| l.contains("B(1/2)") || l.contains("energy")) {
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(v, 0.0, "{line}");
    }
    let report = cmd_check(&out.join("zero"), "theorem", &[("n".into(), "1".into())]).unwrap();
    assert!(report.contains("\"pass\": true"), "{report}");
}

#[test]
fn config_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", &SMALL.replace("\"nx\": 16, ", ""));
    let o = bin().args(["run", "-c", cfg.to_str().unwrap(), "-o", dir.path().join("o").to_str().unwrap()]).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.nx"));
    let cfg = write_config(dir.path(), "keys.json", &SMALL.replace("\"nx\"", "\"nz\": 1, \"nx\"").replace("\"a\"", "\"cfl\": 1, \"a\""));
    let err = cmd_run(&cfg, &dir.path().join("o"), None, None).unwrap_err().to_string();
    assert!(err.contains("grid.nz") && err.contains("run.cfl"), "{err}");
}

#[test]
fn small_run_passes_checks_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mode1.json", SMALL);
    let out = dir.path().join("out");
    for _ in 0..2 {
        let o = bin()
            .args(["--threads", "1", "--seed", "7", "run", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(out.join("mode1/norms.csv")).unwrap();
    let b = fs::read(out.join("mode1-2/norms.csv")).unwrap();
    assert_eq!(a, b);

    let run = out.join("mode1");
    let theorem = cmd_check(&run, "theorem", &[]).unwrap();
    assert!(theorem.contains("\"pass\": true"), "{theorem}");
    let budget = cmd_check(&run, "budget", &[("q".into(), "0".into()), ("start".into(), "0".into()), ("end".into(), "10".into())]).unwrap();
    assert!(budget.contains("\"pass\": true"), "{budget}");
    let tri = cmd_check(&run, "trilinear", &[("lemma".into(), "3.2".into()), ("s".into(), "0.5".into())]).unwrap();
    let v: serde_json::Value = serde_json::from_str(&tri).unwrap();
    assert!(v["ratio"].as_f64().unwrap().is_finite());
    let manifest = fs::read_to_string(run.join("manifest.json")).unwrap();
    assert!(manifest.contains("reports/budget_q0_start0_end10.json"));

    let o = bin().args(["check", "-r", run.to_str().unwrap(), "-k", "spectrum"]).output().unwrap();
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("budget") && err.contains("theorem") && err.contains("trilinear"), "{err}");
}

#[test]
fn sweep_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let entries: Vec<_> = [0.2, 0.1, 0.05].iter().map(|&e| SweepEntry::synthetic(e, 5.0 * e)).collect();
    let msg = write_sweep_outputs(dir.path(), &entries).unwrap();
    let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    assert!((fit["slope"].as_f64().unwrap() - 1.0).abs() < 1e-10, "{msg}");
    assert_eq!(fit["entries_used"], 3);

    let cfg = write_config(
        dir.path(),
        "single.json",
        &SMALL.replace("\"t_end\": 0.2", "\"t_end\": 0.05").replace("\"data\"", "\"sweep\": {\"epsilons\": [0.1]}, \"data\""),
    );
    let out = dir.path().join("single");
    let msg = cmd_sweep(&cfg, &out, None).unwrap();
    assert!(msg.contains("no rate fit"), "{msg}");
    assert_eq!(fs::read_to_string(out.join("sweep.csv")).unwrap().lines().count(), 2);
    assert!(!out.join("fit.json").exists());
}
