//! End-to-end runs of the command-line tool.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kgthought::runner::read_traces;
use kgthought::trace::TraceRecord;

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn kgthought(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgthought"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = kgthought(args);
    assert!(
        out.status.success(),
        "{args:?}: {}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn golden_run(out: &Path) {
    ok(&[
        "run",
        "--kg",
        &fixture("krt39.nodes"),
        "--questions",
        &fixture("krt39.questions"),
        "--replay",
        &fixture("example1.replay"),
        "--judge",
        "llm",
        "--judge-replay",
        &fixture("judge_yes.replay"),
        "--out",
        out.to_str().unwrap(),
    ]);
}

#[test]
fn run_writes_trace_results_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    golden_run(&out);

    let traces = read_traces(&out.join("traces")).unwrap();
    assert_eq!(traces.len(), 1);
    let t = &traces[0];
    assert_eq!(t.answer.as_deref(), Some("head, skin of body"));
    assert_eq!(t.judgement.judge_correct, Some(true));
    assert!(t.bound_check.ok);
    assert!(t.started_unix_ms.is_none(), "replay runs carry no timestamps");
    assert!(t.validate().is_empty(), "{:?}", t.validate());

    let results = fs::read_to_string(out.join("results.lines")).unwrap();
    let mut lines = results.lines();
    assert!(lines.next().unwrap().contains("cot-agent"));
    let row: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(row["rouge_l"], 1.0);
    assert_eq!(row["error_class"], "correct");
    let report = fs::read_to_string(out.join("report.table")).unwrap();
    assert!(report.contains("biomedical"), "{report}");
}

#[test]
fn validate_trace_accepts_clean_and_flags_tampered_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    golden_run(&out);
    assert!(ok(&["validate-trace", out.to_str().unwrap()]).starts_with("ok"));

    let path: PathBuf = fs::read_dir(out.join("traces"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let mut t = TraceRecord::from_text(&fs::read_to_string(&path).unwrap()).unwrap();
    t.answer = Some("liver".into());
    t.graph.frontier = vec![0, 1, 2, 3];
    fs::write(&path, t.to_text()).unwrap();
    let out = kgthought(&["validate-trace", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("answer differs"), "{text}");
}

#[test]
fn missing_graph_fails_before_writing_anything() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let res = kgthought(&[
        "run",
        "--kg",
        tmp.path().join("absent.nodes").to_str().unwrap(),
        "--questions",
        &fixture("krt39.questions"),
        "--replay",
        &fixture("example1.replay"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!res.status.success());
    assert!(!out.exists());
    assert!(String::from_utf8_lossy(&res.stderr).contains("error"));
}

#[test]
fn wire_backend_needs_endpoint_and_model() {
    let tmp = tempfile::tempdir().unwrap();
    let res = kgthought(&[
        "run",
        "--kg",
        &fixture("krt39.nodes"),
        "--questions",
        &fixture("krt39.questions"),
        "--backend",
        "wire",
        "--out",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("--endpoint"));
}

#[test]
fn sweep_runs_each_value_and_tabulates() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    ok(&[
        "sweep",
        "--kg",
        &fixture("krt39.nodes"),
        "--questions",
        &fixture("krt39.questions"),
        "--replay",
        &fixture("example1.replay"),
        "--out",
        out.to_str().unwrap(),
        "--axis",
        "steps",
        "--values",
        "2,4",
    ]);
    assert!(out.join("steps-2/results.lines").exists());
    assert!(out.join("steps-4/results.lines").exists());
    let table = fs::read_to_string(out.join("sweep.table")).unwrap();
    let rouge: Vec<&str> = table.lines().filter(|l| l.contains("\trouge_l\t")).collect();
    // Two steps are too few for the four-step reference trace.
    assert_eq!(rouge, ["steps\t2\trouge_l\t0", "steps\t4\trouge_l\t1"]);
}

#[test]
fn gen_graph_is_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let paths: Vec<PathBuf> = (0..3).map(|i| tmp.path().join(format!("g{i}.nodes"))).collect();
    for (p, seed) in paths.iter().zip(["5", "5", "6"]) {
        let q = p.with_extension("questions");
        ok(&[
            "gen-graph",
            "--seed",
            seed,
            "--nodes",
            "15",
            "--out",
            p.to_str().unwrap(),
            "--questions",
            "4",
            "--questions-out",
            q.to_str().unwrap(),
        ]);
    }
    let read = |p: &Path| fs::read(p).unwrap();
    assert_eq!(read(&paths[0]), read(&paths[1]));
    assert_ne!(read(&paths[0]), read(&paths[2]));
    assert_eq!(
        read(&paths[0].with_extension("questions")),
        read(&paths[1].with_extension("questions"))
    );
}

#[test]
fn strict_replay_runs_the_golden_script_in_order() {
    let tmp = tempfile::tempdir().unwrap();
    let script = tmp.path().join("strict.replay");
    // Strict scripts are consumed front to back, so reverse the fixture.
    let text = fs::read_to_string(fixture("example1.replay")).unwrap();
    let reversed: Vec<&str> = text.lines().rev().collect();
    fs::write(&script, reversed.join("\n")).unwrap();
    let out = tmp.path().join("run");
    ok(&[
        "run",
        "--kg",
        &fixture("krt39.nodes"),
        "--questions",
        &fixture("krt39.questions"),
        "--replay",
        script.to_str().unwrap(),
        "--strict-replay",
        "--out",
        out.to_str().unwrap(),
    ]);
    let traces = read_traces(&out.join("traces")).unwrap();
    assert_eq!(traces[0].answer.as_deref(), Some("head, skin of body"));
}
