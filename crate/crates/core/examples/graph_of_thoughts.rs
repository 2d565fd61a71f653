//! Graph-of-thoughts search: adjacent expansions are merged into states
//! with two parents before selection.
//!
//! cargo run --example graph_of_thoughts

use kgthought::cost::{tags, Meter};
use kgthought::eval::Question;
use kgthought::kg::{generate_synthetic_graph, SyntheticSpec};
use kgthought::llm::{CompletionRequest, FnBackend, Gateway, LlmError, PromptRegistry};
use kgthought::search::{run_search, Interaction, SearchConfig, Strategy};
use kgthought::Context;

fn main() -> anyhow::Result<()> {
    let graph = generate_synthetic_graph(8, &SyntheticSpec::default())?;
    let question = Question::new("demo", "What is gene 0 associated with?", "disease 2");

    let backend = FnBackend(|req: &CompletionRequest| -> Result<String, LlmError> {
        Ok(match req.tag.as_str() {
            tags::THOUGHT => "Thought: Check gene 0.\nAction: NeighbourCheck[N0, associated-with]".into(),
            tags::MERGE if req.prompt.contains("Observation") => {
                "Both chains saw the same neighbours. Finish[disease 2]".into()
            }
            tags::MERGE => "Combine the two lookups.".into(),
            tags::SELECT => "The best choice is {{3}}".into(),
            _ => String::new(),
        })
    });

    let cfg = SearchConfig {
        strategy: Strategy::Got,
        interaction: Interaction::Agent,
        k: 2,
        t: 1,
        d_max: 3,
        ..SearchConfig::default()
    };
    let meter = Meter::new(false);
    let prompts = PromptRegistry::default();
    let ctx = Context::new(&graph, Gateway::new(&backend, &meter), &prompts);
    let outcome = run_search(&ctx, &question, &cfg)?;

    for s in &outcome.graph.states {
        println!(
            "#{} depth {} parents {:?} {:?}: {}",
            s.id, s.depth, s.parents, s.status, s.thought
        );
    }
    println!(
        "answer: {:?}, merge attempts {}",
        outcome.answer,
        outcome.counters.merge_attempts()
    );
    Ok(())
}
