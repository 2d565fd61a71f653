//! Replays a four-step agent trace over the KRT39 graph and prints the
//! scratchpad.
//!
//! cargo run --example golden_agent

use std::path::Path;

use kgthought::agent::{run_agent, AgentConfig};
use kgthought::cost::Meter;
use kgthought::eval::load_questions;
use kgthought::kg::load_graph;
use kgthought::llm::{Gateway, PromptRegistry, ReplayScript};
use kgthought::Context;

fn main() -> anyhow::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let graph = load_graph(fixtures.join("krt39.nodes"))?;
    let question = load_questions(fixtures.join("krt39.questions"))?.remove(0);
    let script = ReplayScript::load(fixtures.join("example1.replay"), false)?;

    let meter = Meter::new(false);
    let prompts = PromptRegistry::default();
    let ctx = Context::new(&graph, Gateway::new(&script, &meter), &prompts);
    let outcome = run_agent(&question, &ctx, 10, &AgentConfig::default())?;

    println!("Question: {}\n", question.text);
    println!("{}\n", outcome.scratchpad.render());
    println!("answer: {:?} ({:?})", outcome.answer, outcome.termination);
    let counters = meter.snapshot();
    println!(
        "llm calls: {}, graph operations: {}",
        counters.total_llm_calls(),
        counters.total_kg_ops()
    );
    Ok(())
}
