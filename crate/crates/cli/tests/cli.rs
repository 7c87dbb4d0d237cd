use std::path::Path;
use std::process::Command;

fn pwadapt() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pwadapt"));
    cmd.env_remove("PWADAPT_OUT_DIR");
    cmd
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn constant_smoke_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "smoke.json",
        r#"{"problem": {"dim": 1, "potential": {"family": "constant", "c": 1.0}, "n_eigs": 1}}"#,
    );
    let out = dir.path().join("out");
    let status = pwadapt()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .arg("--quiet")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("iterations.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 2);
    let col = rows[0].split(',').position(|c| c == "eta_tilde").unwrap();
    assert_eq!(
        rows[1].split(',').nth(col).unwrap().parse::<f64>().unwrap(),
        0.0
    );
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"termination_reason\": \"exact\""));
}

#[test]
fn trig_convergence_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "trig.json",
        r#"{"problem": {"dim": 1, "potential": {"family": "trig", "c": 1.0, "terms": [{"k": [1], "a": 1.0}]}},
            "algorithm": {"m0": 1, "zeta": 0.2, "tol": 1e-8},
            "verification": {"m_ref": 64},
            "output": {"formats": ["audit", "gnuplot"]}}"#,
    );
    let out = dir.path().join("out");
    let status = pwadapt()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .arg("--quiet")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("iterations.csv")).unwrap();
    let mut lines = csv.lines();
    let col = lines
        .next()
        .unwrap()
        .split(',')
        .position(|c| c == "eta_tilde")
        .unwrap();
    let eta: Vec<f64> = lines
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect();
    assert!(eta.len() > 2);
    assert!(eta.windows(2).all(|w| w[1] < w[0]));
    for f in ["summary.json", "marked_sets.jsonl", "plot.gp"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn compare_mode_writes_uniform_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cmp.json",
        r#"{"seed": 5, "problem": {"dim": 1, "n_eigs": 2,
             "potential": {"family": "random-decay", "p": 2.5, "r_cut": 16}},
            "algorithm": {"m0": 2, "tol": 0, "max_iter": 6},
            "verification": {"m_ref": 64}}"#,
    );
    let out = dir.path().join("out");
    let status = pwadapt()
        .args([
            "run",
            cfg.to_str().unwrap(),
            "--mode",
            "compare",
            "--quiet",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let uniform = std::fs::read_to_string(out.join("uniform.csv")).unwrap();
    assert!(uniform.starts_with("radius,dof,distance,"));
    assert!(out.join("comparison.csv").exists());
}

#[test]
fn env_var_sets_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "smoke.json",
        r#"{"problem": {"dim": 1, "potential": {"family": "constant", "c": 2.0}}}"#,
    );
    let out = dir.path().join("from_env");
    let status = pwadapt()
        .env("PWADAPT_OUT_DIR", &out)
        .args(["run", cfg.to_str().unwrap(), "--quiet"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("summary.json").exists());
}

#[test]
fn validation_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"problem": {"dim": 4, "potential": {"family": "constant", "c": 1.0}}}"#,
    );
    let output = pwadapt()
        .args(["run", cfg.to_str().unwrap()])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("problem.dim"));
    let missing = pwadapt()
        .args(["run", "/nonexistent/config.json", "--quiet"])
        .status()
        .unwrap();
    assert_eq!(missing.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // Asking for more eigenpairs than the initial space holds.
    let cfg = write_config(
        dir.path(),
        "toobig.json",
        r#"{"problem": {"dim": 1, "potential": {"family": "constant", "c": 1.0}, "n_eigs": 9},
            "algorithm": {"m0": 1}}"#,
    );
    let status = pwadapt()
        .args(["run", cfg.to_str().unwrap(), "--quiet"])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}
