//! Tree search with a score evaluator over a synthetic graph. A scripted
//! backend stands in for the model: thoughts vary per call, scores favour
//! later thoughts, and the search finishes at depth three.
//!
//! cargo run --example tree_search

use std::sync::atomic::{AtomicUsize, Ordering};

use kgthought::cost::{bound_for, check, tags, Meter};
use kgthought::eval::Question;
use kgthought::kg::{generate_synthetic_graph, SyntheticSpec};
use kgthought::llm::{CompletionRequest, FnBackend, Gateway, LlmError, PromptRegistry};
use kgthought::search::{run_search, Evaluator, Interaction, SearchConfig, Strategy};
use kgthought::Context;

fn main() -> anyhow::Result<()> {
    let graph = generate_synthetic_graph(3, &SyntheticSpec::default())?;
    let question = Question::new("demo", "Which anatomy is gene 0 expressed in?", "anatomy 1");

    let calls = AtomicUsize::new(0);
    let backend = FnBackend(|req: &CompletionRequest| -> Result<String, LlmError> {
        let n = calls.fetch_add(1, Ordering::SeqCst);
        Ok(match req.tag.as_str() {
            tags::THOUGHT if req.prompt.matches("Thought 2:").count() > 0 => {
                "Thought: The expression edge answers it.\nAction: Finish[anatomy 1]".into()
            }
            tags::THOUGHT => format!("Thought: Look at gene 0 (try {n}).\nAction: NeighbourCheck[N0, expressed-in]"),
            tags::SCORE => format!("{:.2}", (n % 10) as f64 / 10.0),
            _ => String::new(),
        })
    });

    let cfg = SearchConfig {
        strategy: Strategy::Tot,
        interaction: Interaction::Agent,
        evaluator: Evaluator::Score,
        k: 3,
        t: 2,
        d_max: 4,
        ..SearchConfig::default()
    };
    let meter = Meter::new(false);
    let prompts = PromptRegistry::default();
    let ctx = Context::new(&graph, Gateway::new(&backend, &meter), &prompts);
    let outcome = run_search(&ctx, &question, &cfg)?;

    for round in &outcome.graph.rounds {
        let scores: Vec<String> = round
            .expansions
            .iter()
            .map(|&id| {
                let s = outcome.graph.state(id);
                format!("#{id}:{}", s.score.map_or("-".into(), |v| format!("{v:.1}")))
            })
            .collect();
        println!(
            "depth {}: candidates [{}] kept {:?}",
            round.depth,
            scores.join(" "),
            round.retained
        );
    }
    println!(
        "answer: {:?} after {} thought calls",
        outcome.answer,
        outcome.counters.generation_calls()
    );
    let bound = bound_for(&cfg, 0, 0);
    println!(
        "closed-form bound {}: {:?}",
        bound.generation_call_bound,
        check(&outcome.counters, &bound)
    );
    Ok(())
}
