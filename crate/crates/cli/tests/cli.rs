//! End-to-end tests of the `krylov-gap` binary: output files, exit codes,
//! batch configs and run-to-run determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_krylov-gap"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Small converging run shared by most tests.
fn quick_run(out_dir: &Path, extra: &[&str]) -> Output {
    let out_str = out_dir.to_str().unwrap();
    let mut args = vec![
        "run",
        "--problem",
        "tp1",
        "--nx",
        "16",
        "--ny",
        "16",
        "--tol",
        "1e-8",
        "--max-iters",
        "400",
        "--out",
        out_str,
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn run_writes_history_and_config() {
    let dir = tempdir().unwrap();
    let out_dir = dir.path().join("a");
    let out = quick_run(&out_dir, &["--label", "smoke"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("smoke: converged"));

    let history = fs::read_to_string(out_dir.join("history.csv")).unwrap();
    let header = history.lines().next().unwrap();
    assert!(header.starts_with("iter,rec_resid,true_resid,gap_r"));
    assert!(header.ends_with(",replaced"));
    assert!(history.lines().count() > 2);

    let config: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["problem"], "TP1");
    assert_eq!(config["nx"], 16);
    assert_eq!(config["label"], "smoke");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempdir().unwrap();
    let (da, db) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&quick_run(&da, &[])), 0);
    assert_eq!(code(&quick_run(&db, &[])), 0);
    let a = fs::read(da.join("history.csv")).unwrap();
    let b = fs::read(db.join("history.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn plots_flag_emits_three_svg_panels() {
    let dir = tempdir().unwrap();
    let (da, db) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&quick_run(&da, &["--plots"])), 0);
    assert_eq!(code(&quick_run(&db, &["--plots"])), 0);
    for name in ["residuals.svg", "colnorms_runmax.svg", "colnorms.svg"] {
        let a = fs::read(da.join(name)).unwrap();
        assert!(a.starts_with(b"<svg"), "{name} is not an svg");
        let b = fs::read(db.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn unknown_problem_is_a_config_error() {
    let dir = tempdir().unwrap();
    let out = run(&[
        "run",
        "--problem",
        "tp9",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
}

#[test]
fn missing_problem_is_a_config_error() {
    let dir = tempdir().unwrap();
    let out = run(&["run", "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("problem"));
}

#[test]
fn automated_policy_rejected_outside_pipelined_bicgstab() {
    let dir = tempdir().unwrap();
    let out = quick_run(&dir.path().join("x"), &["--solver", "pcg", "--rr", "auto"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn unwritable_out_dir_is_an_io_error() {
    let dir = tempdir().unwrap();
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, b"file, not a directory").unwrap();
    let out = quick_run(&blocker.join("sub"), &[]);
    assert_eq!(code(&out), 1, "stderr: {}", stderr(&out));
}

#[test]
fn list_problems_prints_the_registry() {
    let out = run(&["list-problems"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for token in [
        "TP1", "TP2", "TP3", "TP4", "TP5", "40000", "1000000", "250000", "125000", "2D 9-point",
        "3D 7-point", "icc0", "none",
    ] {
        assert!(text.contains(token), "missing {token} in:\n{text}");
    }
}

#[test]
fn compare_summarizes_runs_on_one_problem() {
    let dir = tempdir().unwrap();
    let (da, db) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(
        code(&quick_run(&da, &["--solver", "bicgstab", "--label", "classic"])),
        0
    );
    assert_eq!(
        code(&quick_run(&db, &["--solver", "pbicgstab", "--label", "piped"])),
        0
    );
    let out = run(&["compare", da.to_str().unwrap(), db.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("classic") && text.contains("piped"));
}

#[test]
fn compare_rejects_mismatched_instances() {
    let dir = tempdir().unwrap();
    let (da, db) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&quick_run(&da, &[])), 0);
    let out_b = run(&[
        "run",
        "--problem",
        "tp1",
        "--nx",
        "12",
        "--ny",
        "12",
        "--tol",
        "1e-8",
        "--out",
        db.to_str().unwrap(),
    ]);
    assert_eq!(code(&out_b), 0);
    let out = run(&["compare", da.to_str().unwrap(), db.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "stdout: {}", stdout(&out));
}

#[test]
fn batch_config_runs_every_entry() {
    let dir = tempdir().unwrap();
    let (da, db) = (dir.path().join("a"), dir.path().join("b"));
    let config = format!(
        r#"[
            {{"problem": "tp1", "nx": 16, "ny": 16, "solver": "bicgstab", "out": "{}"}},
            {{"problem": "tp1", "nx": 16, "ny": 16, "solver": "pbicgstab", "out": "{}"}}
        ]"#,
        da.display(),
        db.display()
    );
    let cfg_path = dir.path().join("batch.json");
    fs::write(&cfg_path, config).unwrap();
    let out = run(&[
        "run",
        "--config",
        cfg_path.to_str().unwrap(),
        "--tol",
        "1e-8",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    for d in [&da, &db] {
        assert!(d.join("history.csv").exists());
        let config: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.join("config.json")).unwrap()).unwrap();
        assert_eq!(config["tol"], 1e-8, "flag override reaches every entry");
    }
}

#[test]
fn batch_config_rejects_duplicate_out_dirs() {
    let dir = tempdir().unwrap();
    let shared = dir.path().join("same");
    let config = format!(
        r#"[
            {{"problem": "tp1", "nx": 16, "ny": 16, "solver": "bicgstab", "out": "{0}"}},
            {{"problem": "tp1", "nx": 16, "ny": 16, "solver": "pbicgstab", "out": "{0}"}}
        ]"#,
        shared.display()
    );
    let cfg_path = dir.path().join("batch.json");
    fs::write(&cfg_path, config).unwrap();
    let out = run(&["run", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
}
