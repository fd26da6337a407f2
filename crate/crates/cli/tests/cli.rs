use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bench(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/minibench").join(file)
}

fn convertest(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convertest"))
        .args(args)
        .args(["--mock-script", bench("mock.json").to_str().unwrap()])
        .args(["--oracle", bench("oracle.json").to_str().unwrap()])
        .args(["--m", "3", "--n", "3", "--z", "3", "--out", out.to_str().unwrap()])
        .output()
        .unwrap()
}

fn single_run_dir(out: &Path) -> PathBuf {
    let mut dirs: Vec<_> = std::fs::read_dir(out.join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1);
    dirs.pop().unwrap()
}

#[test]
fn evaluate_succeeds_and_report_rerenders() {
    let out = tempfile::tempdir().unwrap();
    let o = convertest(&["evaluate", "--tasks", bench("tasks.jsonl").to_str().unwrap()], out.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("| SCTG / cove (full) |"), "{table}");

    let run = single_run_dir(out.path());
    let again = Command::new(env!("CARGO_BIN_EXE_convertest")).arg("report").arg(&run).output().unwrap();
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(String::from_utf8(again.stdout).unwrap(), table);
}

#[test]
fn quarantined_task_exits_with_two() {
    let out = tempfile::tempdir().unwrap();
    let mut tasks = std::fs::read_to_string(bench("tasks.jsonl")).unwrap();
    tasks.push_str(
        r#"{"task_id":"mb/99_unknown","description":"Nothing scripted.","entry_point":"unknown","signature":"def unknown(x):","ground_truth":"def unknown(x):\n    return x\n"}"#,
    );
    tasks.push('\n');
    let path = out.path().join("tasks.jsonl");
    std::fs::write(&path, tasks).unwrap();
    let o = convertest(&["evaluate", "--tasks", path.to_str().unwrap()], out.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mb/99_unknown"));
}

#[test]
fn invalid_configuration_exits_with_one() {
    let out = tempfile::tempdir().unwrap();
    let tasks = bench("tasks.jsonl");
    let o = Command::new(env!("CARGO_BIN_EXE_convertest"))
        .args(["evaluate", "--tasks", tasks.to_str().unwrap(), "--strategy", "sctg", "--n", "1"])
        .args(["--mock-script", bench("mock.json").to_str().unwrap()])
        .args(["--oracle", bench("oracle.json").to_str().unwrap(), "--out", out.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let missing = convertest(&["evaluate", "--tasks", "/nonexistent/tasks.jsonl"], out.path());
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn ablate_writes_the_comparison_table() {
    let out = tempfile::tempdir().unwrap();
    let o = convertest(&["ablate", "--tasks", bench("tasks.jsonl").to_str().unwrap()], out.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(out.path().join("ablation.md")).unwrap();
    for row in ["(full)", "(w/o CoVe)", "(w/o CoVe & SC)", "(full-ablation baseline)"] {
        assert!(table.contains(row), "{row} missing:\n{table}");
    }
    assert_eq!(std::fs::read_dir(out.path().join("runs")).unwrap().count(), 4);
}

#[test]
fn generate_stage_prints_no_table() {
    let out = tempfile::tempdir().unwrap();
    let o = convertest(&["generate", "--tasks", bench("tasks.jsonl").to_str().unwrap()], out.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    assert!(single_run_dir(out.path()).join("tasks/mb_01_add/tests.json").is_file());
}
