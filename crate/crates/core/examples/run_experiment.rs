//! Runs the experiment harness on the KRT39 fixture and prints the files
//! it writes.
//!
//! cargo run --example run_experiment

use std::fs;
use std::path::Path;

use kgthought::runner::{run_experiment, BackendSpec, JudgeMode, RunConfig};

fn main() -> anyhow::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let out = std::env::temp_dir().join("kgthought-example-run");
    let _ = fs::remove_dir_all(&out);

    let mut cfg = RunConfig::new(
        fixtures.join("krt39.nodes"),
        fixtures.join("krt39.questions"),
        BackendSpec::Replay {
            path: fixtures.join("example1.replay"),
            strict: false,
        },
        &out,
    );
    cfg.judge = JudgeMode::Llm;
    cfg.judge_replay = Some(fixtures.join("judge_yes.replay"));
    let summary = run_experiment(&cfg)?;

    println!("method {}, {} questions", summary.method(), summary.traces.len());
    println!("--- results.lines\n{}", fs::read_to_string(out.join("results.lines"))?);
    println!("--- report.table\n{}", fs::read_to_string(out.join("report.table"))?);
    println!("traces in {}", out.join("traces").display());
    Ok(())
}
