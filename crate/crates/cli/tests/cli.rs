use std::process::{Command, Output};

fn masmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_masmp")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn scenario_prints_the_tactic_sequence() {
    let o = masmp(&["scenario"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("defensive -> aggressive -> aggressive -> defensive"));
}

#[test]
fn eval_writes_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, workers) in [(&a, "1"), (&b, "3")] {
        let o = masmp(&["eval", "--out-dir", dir.path().to_str().unwrap(), "--workers", workers]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("report.csv")).unwrap();
    let report = read(&a);
    assert_eq!(report, read(&b));
    // header plus 14 cells
    assert_eq!(report.iter().filter(|&&c| c == b'\n').count(), 15);
}

#[test]
fn run_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let t = trace.to_str().unwrap();
    let o = masmp(&["run", "--difficulty", "2", "--seed", "4", "--trace-out", t]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = masmp(&["replay", t]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("start opening"));
}

#[test]
fn bad_input_fails_cleanly() {
    let o = masmp(&["eval", "--difficulties", "9"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let o = masmp(&["replay", "/nonexistent/trace.jsonl"]);
    assert!(!o.status.success());
}
