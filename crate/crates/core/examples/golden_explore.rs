//! Answers the KRT39 question by automatic graph exploration under a
//! replay script and prints the harvested triples.
//!
//! cargo run --example golden_explore

use std::path::Path;

use kgthought::cost::Meter;
use kgthought::eval::load_questions;
use kgthought::kg::load_graph;
use kgthought::llm::{Gateway, PromptRegistry, ReplayScript};
use kgthought::search::{run_search, Interaction, SearchConfig};
use kgthought::Context;

fn main() -> anyhow::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let graph = load_graph(fixtures.join("krt39.nodes"))?;
    let question = load_questions(fixtures.join("krt39.questions"))?.remove(0);
    let script = ReplayScript::load(fixtures.join("example2.replay"), false)?;

    let meter = Meter::new(false);
    let prompts = PromptRegistry::default();
    let ctx = Context::new(&graph, Gateway::new(&script, &meter), &prompts);
    let outcome = run_search(&ctx, &question, &SearchConfig::cot(Interaction::Explore, 5))?;

    if let Some(state) = outcome.graph.answer_state() {
        println!("Thought: {}", state.thought);
        println!("Found triples:");
        for t in &state.evidence.exploration.found_triples {
            println!("  {t}");
        }
    }
    println!("answer: {:?}", outcome.answer);
    for (tag, n) in &outcome.counters.llm_calls_by_tag {
        println!("  {tag}: {n}");
    }
    Ok(())
}
