use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn corpus(path: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(path)
}

fn scratch(dir: &str) -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(corpus(dir)).unwrap() {
        let p = entry.unwrap().path();
        if p.is_file() {
            std::fs::copy(&p, tmp.path().join(p.file_name().unwrap())).unwrap();
        }
    }
    tmp
}

fn vdd(project: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vdd")).arg("--project").arg(project).args(args).output().unwrap()
}

fn vdd_stdin(project: &Path, args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_vdd"))
        .current_dir(project)
        .arg("--project")
        .arg(project)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn clean_corpora_check() {
    for dir in ["aman", "lift"] {
        let o = vdd(&corpus(dir), &["check"]);
        assert_eq!(o.status.code(), Some(0), "{dir}: {}", stderr(&o));
    }
}

#[test]
fn two_machine_domains_exit_2() {
    let dir = scratch("aman");
    std::fs::copy(corpus("aman/variants/two-machines.frame"), dir.path().join("aman.frame")).unwrap();
    let o = vdd(dir.path(), &["check"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("error[E-FRAME-001]"), "{err}");
    // file:line:col
    assert!(err.lines().any(|l| l.contains("aman.frame:") && l.split(':').nth(1).is_some_and(|n| n.parse::<u32>().is_ok())), "{err}");
}

#[test]
fn seeded_violation_exits_3_with_trace() {
    let dir = scratch("aman");
    std::fs::copy(corpus("aman/variants/M1.gap2-inv.mch"), dir.path().join("M1.mch")).unwrap();
    let o = vdd(dir.path(), &["check"]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("E-INV-001") && err.contains("inv2") && err.contains("reached by: INITIALISATION"), "{err}");
}

#[test]
fn run_never_records_when_check_fails() {
    let dir = scratch("aman");
    std::fs::copy(corpus("aman/variants/M1.gap2-inv.mch"), dir.path().join("M1.mch")).unwrap();
    let o = vdd(dir.path(), &["run", "--all"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!dir.path().join("vdd.ledger").exists());
}

#[test]
fn run_records_and_report_shows_the_cell() {
    let dir = scratch("aman");
    let o = vdd(dir.path(), &["run", "--vo", "REQ1/M0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("REQ1/M0: PASS"));
    let csv = stdout(&vdd(dir.path(), &["report", "--csv"]));
    assert_eq!(csv, "requirement,M0,M1\nREQ1,PASS,-\nREQ5,-,-\n");
    let status = stdout(&vdd(dir.path(), &["status"]));
    assert!(status.lines().any(|l| l.starts_with("REQ1") && l.contains("VALIDATED")), "{status}");
    assert!(status.lines().any(|l| l.starts_with("REQ5") && l.contains("VERIFIED")), "{status}");
}

#[test]
fn failing_vo_exits_4_and_shows_in_the_matrix() {
    let dir = scratch("aman");
    std::fs::copy(corpus("aman/variants/M1.gap2.mch"), dir.path().join("M1.mch")).unwrap();
    let o = vdd(dir.path(), &["run", "--all"]);
    assert_eq!(o.status.code(), Some(4));
    let csv = stdout(&vdd(dir.path(), &["report", "--csv"]));
    assert_eq!(csv.matches("FAIL").count(), 1, "{csv}");
}

#[test]
fn editing_after_a_run_makes_the_cell_stale() {
    let dir = scratch("aman");
    vdd(dir.path(), &["run", "--all"]);
    std::fs::copy(corpus("aman/variants/M0.remove.mch"), dir.path().join("M0.mch")).unwrap();
    let csv = stdout(&vdd(dir.path(), &["report", "--csv"]));
    assert_eq!(csv, "requirement,M0,M1\nREQ1,STALE,-\nREQ5,-,STALE\n");
}

#[test]
fn unknown_vo_is_rejected() {
    let dir = scratch("lift");
    let o = vdd(dir.path(), &["run", "--vo", "REQ9/M0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown VO"));
}

#[test]
fn missing_manifest_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(vdd(dir.path(), &["check"]).status.code(), Some(1));
}

#[test]
fn init_writes_a_loadable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = vdd(dir.path(), &["init", "--name", "demo"]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("vdd.project")).unwrap();
    assert!(text.starts_with("name = demo\n"));
    assert_eq!(vdd(dir.path(), &["check"]).status.code(), Some(0));
    assert_eq!(vdd(dir.path(), &["init"]).status.code(), Some(1));
}

#[test]
fn json_output_is_line_delimited() {
    let o = vdd(&corpus("lift"), &["--json", "plan"]);
    for line in stdout(&o).lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["type"], "plan");
    }
}

#[test]
fn animate_two_increments() {
    let dir = scratch("lift");
    let o = vdd_stdin(dir.path(), &["animate", "M0"], "1\n1\n");
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let states: Vec<&str> = out.lines().filter_map(|l| l.trim_start_matches("> ").strip_prefix("state: ")).collect();
    assert_eq!(states, ["floor=0", "floor=1", "floor=2"]);
}

#[test]
fn animate_reset_at_start_and_bad_input() {
    let dir = scratch("lift");
    let o = vdd_stdin(dir.path(), &["animate", "M0"], "reset\nundo\n7\nxyz\nquit\n");
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let states: Vec<&str> = out.lines().filter_map(|l| l.trim_start_matches("> ").strip_prefix("state: ")).collect();
    assert!(states.iter().all(|s| *s == "floor=0"), "{out}");
    assert_eq!(out.matches("invalid selection").count(), 2);
}

#[test]
fn saved_animation_runs_as_a_passing_vo() {
    let dir = scratch("lift");
    let o = vdd_stdin(dir.path(), &["animate", "M0"], "1\n1\nsave s1.trace\n");
    assert_eq!(o.status.code(), Some(0));
    let trace = std::fs::read_to_string(dir.path().join("s1.trace")).unwrap();
    assert_eq!(trace.trim(), "TRACE(inc; inc)");
    std::fs::write(dir.path().join("saved.vo"), format!("REQ0A/M0: {}", trace)).unwrap();
    std::fs::write(dir.path().join("lift.vo"), "REQ0/M0: LTL1 := FG({floor = 1})\n").unwrap();
    let o = vdd(dir.path(), &["run", "--vo", "REQ0A/M0"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).starts_with("REQ0A/M0: PASS"));
}

#[test]
fn eof_ends_animation_cleanly() {
    let dir = scratch("aman");
    let o = vdd_stdin(dir.path(), &["animate", "M1"], "");
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("addAirplane(p := a, t := 0)"));
}

#[test]
fn impact_reports_nothing_before_any_run() {
    let o = vdd(&corpus("aman"), &["impact"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "no stale VOs\n");
}
