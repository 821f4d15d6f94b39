use std::path::Path;
use std::process::{Command, Output};

fn sotlab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sotlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn passing_scenario_exits_zero_and_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let o = sotlab(&["kernels-check", "--threads", "1", "--seed", "4"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("PASS [PSI-CONSTANT]"));
    assert!(dir.path().join("kernels_check.csv").exists());
    let jsonl = std::fs::read_to_string(dir.path().join("kernels_check.jsonl")).unwrap();
    assert!(jsonl.lines().next().unwrap().contains("\"seed\":4"));
}

#[test]
fn failing_verdict_exits_one_and_report_collates() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sotlab(&["deterministic"], dir.path()).status.code(), Some(0));
    let o = sotlab(
        &["marginal", "--set", "paths=100", "--set", "grid=16", "--set", "w2_threshold=1e-12"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL [W2]"));
    let r = sotlab(&["report"], dir.path());
    assert_eq!(r.status.code(), Some(1));
    let text = stdout(&r);
    assert!(text.contains("| deterministic | IDENTITY-CUBIC | PASS |"));
    assert!(text.contains("| marginal | W2 | FAIL |"));
    assert!(dir.path().join("report.md").exists());
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "gamma = 1\nwidth = 3\n").unwrap();
    let o = sotlab(&["duality", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key 'width'"));

    let wrong = dir.path().join("wrong.conf");
    std::fs::write(&wrong, "scenario = duality\n").unwrap();
    assert_eq!(sotlab(&["assumptions", "--config", wrong.to_str().unwrap()], dir.path()).status.code(), Some(2));
    assert_eq!(sotlab(&["assumptions", "--set", "m_grid=0.3"], dir.path()).status.code(), Some(2));
    assert_eq!(sotlab(&["report"], dir.path()).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sotlab(&["no-such-command"], dir.path()).status.code(), Some(2));
    assert_eq!(sotlab(&["duality", "--seed", "x"], dir.path()).status.code(), Some(2));
    assert_eq!(sotlab(&["deterministic", "--threads", "0"], dir.path()).status.code(), Some(2));
}

#[test]
fn seed_flag_changes_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, seed) in [(&a, "1"), (&b, "2")] {
        assert_eq!(sotlab(&["deterministic", "--seed", seed], dir.path()).status.code(), Some(0));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("deterministic.csv")).unwrap();
    assert_ne!(read(&a), read(&b));
}
