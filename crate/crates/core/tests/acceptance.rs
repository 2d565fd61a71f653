//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always
//! printed. The live endpoint check only runs when
//! `KGTHOUGHT_LIVE_ENDPOINT` and `KGTHOUGHT_LIVE_MODEL` are set.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kgthought::cost::{bound_for, check, tags, Meter};
use kgthought::eval::{load_questions, rouge_l, rouge_l_tokens, synthetic_questions, ErrorClass, Question};
use kgthought::explore::{explore, ExplorationState, ExploreConfig};
use kgthought::kg::{generate_synthetic_graph, load_graph, save_graph, KnowledgeGraph, NodeRecord, SyntheticSpec};
use kgthought::llm::{CompletionRequest, FnBackend, Gateway, LlmError, PromptRegistry, ReplayScript, API_KEY_ENV};
use kgthought::runner::{read_traces, run_experiment, BackendSpec, JudgeMode, RunConfig};
use kgthought::search::{
    evaluate_score, evaluate_select, run_search, Evaluator, Evidence, Interaction, SearchConfig, StateStatus, Strategy,
    ThoughtState,
};
use kgthought::Context;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn krt39_question() -> Question {
    load_questions(fixture("krt39.questions"))
        .expect("fixture questions")
        .remove(0)
}

// ---------------------------------------------------------------------------
// 1. Golden traces

const EXAMPLE_1_STEPS: [&str; 4] = [
    "Thought 1: The question is related to a gene node (KRT39). We need to find this node in the graph.\n\
     Action 1: RetrieveNode[KRT39]\n\
     Observation 1: The ID of the node is 390792.",
    "Thought 2: We need to check the 'Anatomy-expresses-Gene' neighbors of this gene node.\n\
     Action 2: NeighbourCheck[390792, Anatomy-expresses-Gene]\n\
     Observation 2: The neighbors are ['UBERON:0000033', 'UBERON:0002097'].",
    "Thought 3: Retrieve names of the anatomy nodes.\n\
     Action 3: NodeFeature[UBERON:0000033, name], NodeFeature[UBERON:0002097, name]\n\
     Observation 3: UBERON:0000033 → head, UBERON:0002097 → skin of body.",
    "Thought 4: These are the anatomy terms expressed by the gene.\n\
     Action 4: Finish[head, skin of body]",
];

// Quoted heads as printed in the reference trace; names render unquoted.
const EXAMPLE_2_TRIPLES: [&str; 2] = [
    "\"KRT39\" --> Anatomy-expresses-Gene --> head",
    "\"KRT39\" --> Anatomy-expresses-Gene --> skin of body",
];
const EXAMPLE_2_THOUGHT: &str = "KRT39 is a gene that is known to be expressed in two anatomical regions.";

fn golden_traces() -> Check {
    let start = Instant::now();
    let graph = load_graph(fixture("krt39.nodes")).map_err(err)?;
    let q = krt39_question();
    let prompts = PromptRegistry::bare();

    let script = ReplayScript::load(fixture("example1.replay"), false).map_err(err)?;
    let meter = Meter::new(false);
    let ctx = Context::new(&graph, Gateway::new(&script, &meter), &prompts);
    let out = run_search(&ctx, &q, &SearchConfig::cot(Interaction::Agent, 10)).map_err(err)?;
    let pad = out
        .graph
        .answer_state()
        .and_then(|s| s.evidence.scratchpad.clone())
        .ok_or("agent run has no finished scratchpad")?;
    ensure(pad.steps.len() == 4, || format!("agent took {} steps", pad.steps.len()))?;
    for (step, want) in pad.steps.iter().zip(EXAMPLE_1_STEPS) {
        let got = step.render();
        ensure(got == want, || {
            format!("step {} differs:\n{got}\n---\n{want}", step.index)
        })?;
    }
    ensure(out.answer.as_deref() == Some("head, skin of body"), || {
        format!("agent answer {:?}", out.answer)
    })?;

    let script = ReplayScript::load(fixture("example2.replay"), false).map_err(err)?;
    let meter = Meter::new(false);
    let ctx = Context::new(&graph, Gateway::new(&script, &meter), &prompts);
    let out = run_search(&ctx, &q, &SearchConfig::cot(Interaction::Explore, 10)).map_err(err)?;
    let state = out.graph.answer_state().ok_or("explore run did not finish")?;
    ensure(state.thought == EXAMPLE_2_THOUGHT, || {
        format!("thought {:?}", state.thought)
    })?;
    let triples: Vec<String> = state
        .evidence
        .exploration
        .found_triples
        .iter()
        .map(|t| t.to_string())
        .collect();
    let want: Vec<String> = EXAMPLE_2_TRIPLES.iter().map(|t| t.replace('"', "")).collect();
    ensure(triples == want, || format!("triples {triples:?}"))?;
    ensure(out.answer.as_deref() == Some("head, skin of body"), || {
        format!("explore answer {:?}", out.answer)
    })?;

    let elapsed = start.elapsed();
    ensure(elapsed.as_secs_f64() < 1.0, || format!("took {elapsed:?}"))?;
    Ok(format!("both reference traces reproduced in {elapsed:?}"))
}

// ---------------------------------------------------------------------------
// 2. Rouge-L against a full-table LCS oracle

fn oracle_rouge(c: &[String], r: &[String]) -> f64 {
    let (n, m) = (c.len(), r.len());
    let mut table = vec![vec![0usize; m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            table[i][j] = if c[i - 1] == r[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    let lcs = table[n][m] as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let (p, rec) = (lcs / n as f64, lcs / m as f64);
    2.0 * p * rec / (p + rec)
}

fn rouge_oracle() -> Check {
    let vocab = ["head", "skin", "of", "body", "gene", "node"];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let seq = |rng: &mut ChaCha8Rng| -> Vec<String> {
            let len = rng.gen_range(0..=30);
            (0..len)
                .map(|_| vocab[rng.gen_range(0..vocab.len())].to_string())
                .collect()
        };
        let (c, r) = (seq(&mut rng), seq(&mut rng));
        let want = oracle_rouge(&c, &r);
        let via_tokens = rouge_l_tokens(&c, &r);
        let via_text = rouge_l(&c.join(" "), &r.join(", "));
        for got in [via_tokens, via_text] {
            let diff = (got - want).abs();
            worst = worst.max(diff);
            ensure(diff <= 1e-12, || format!("pair {i}: {got} vs oracle {want}"))?;
        }
    }
    let hand = rouge_l("head", "head, skin of body");
    ensure(hand == 0.4, || format!("hand case gave {hand}"))?;
    Ok(format!("1000 pairs within {worst:e} of the oracle; hand case 0.4"))
}

// ---------------------------------------------------------------------------
// 3. Cost bounds

/// A replay script that never finishes: thoughts never carry Finish,
/// stopping checks say no, pruning falls back to the first candidates.
fn endless_script(anchor: &str) -> ReplayScript {
    ReplayScript::from_pairs(
        [
            (
                "^Solve a question answering task",
                format!("Thought: Look the entity up again.\nAction: RetrieveNode[{anchor}]"),
            ),
            (
                "^Given the previous thoughts",
                "Look further along the graph.".to_string(),
            ),
            ("^Given the provided text, extract", format!("{{{{{anchor}}}}}")),
            ("^From the given entity", "{{nothing fits}}".to_string()),
            (
                "^You are provided with a question, a head entity",
                "{{nothing fits}}".to_string(),
            ),
            ("^Is any of the attributes", "{{None}}".to_string()),
            (
                "^You are provided with an original question",
                "[No] Not yet.".to_string(),
            ),
            (
                "^Given a question, you need to select",
                "The best choice is {{1}}".to_string(),
            ),
            ("^Generate a score", "0.5".to_string()),
            (
                "^Generate the next thought for the merged",
                "Combine both lines of inquiry.".to_string(),
            ),
        ],
        false,
    )
    .expect("script patterns compile")
}

fn cost_grid() -> Check {
    let start = Instant::now();
    let graph = generate_synthetic_graph(
        7,
        &SyntheticSpec {
            nodes: 12,
            ..SyntheticSpec::default()
        },
    )
    .map_err(err)?;
    let anchor = graph.nodes().next().expect("nodes").name().to_string();
    let script = endless_script(&anchor);
    let prompts = PromptRegistry::bare();
    let q = Question::new(
        "grid",
        format!("Which entities are linked to {anchor}?"),
        anchor.clone(),
    );

    let mut runs = 0;
    let mut equal_cells = BTreeSet::new();
    let mut unequal_cells: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for &strategy in Strategy::ALL {
        for &interaction in Interaction::ALL {
            for k in 1..=3 {
                for t in 1..=3 {
                    for d in 1..=3 {
                        for n in [1usize, 5, 10] {
                            let cfg = if strategy == Strategy::Cot {
                                SearchConfig::cot(interaction, n)
                            } else {
                                SearchConfig {
                                    strategy,
                                    interaction,
                                    evaluator: if (k + t + d) % 2 == 0 {
                                        Evaluator::Select
                                    } else {
                                        Evaluator::Score
                                    },
                                    k,
                                    t,
                                    d_max: d,
                                    ..SearchConfig::default()
                                }
                            };
                            let meter = Meter::new(false);
                            let ctx = Context::new(&graph, Gateway::new(&script, &meter), &prompts);
                            let out = run_search(&ctx, &q, &cfg).map_err(err)?;
                            runs += 1;
                            ensure(out.answer.is_none(), || "endless script produced an answer".into())?;
                            let bound = bound_for(&cfg, n as u64, cfg.explore.search_depth as u64);
                            let verdict = check(&out.counters, &bound);
                            ensure(verdict.ok, || {
                                format!(
                                    "{strategy}/{interaction} k={k} t={t} D={d} n={n}: {:?}",
                                    verdict.violations
                                )
                            })?;
                            if strategy == Strategy::Got {
                                continue;
                            }
                            let cell = match strategy {
                                Strategy::Cot => format!("cot/{interaction} n={n}"),
                                _ => format!("tot/{interaction} k={k} t={t} D={d}"),
                            };
                            let (got, want) = (out.counters.generation_calls(), bound.generation_call_bound);
                            if got == want {
                                equal_cells.insert(cell);
                            } else {
                                unequal_cells.insert(cell, (got, want));
                            }
                        }
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed.as_secs_f64() < 30.0, || format!("grid took {elapsed:?}"))?;

    // The reference points quoted for the criterion.
    let tot = SearchConfig {
        strategy: Strategy::Tot,
        k: 3,
        t: 3,
        d_max: 2,
        ..SearchConfig::default()
    };
    let got = SearchConfig {
        strategy: Strategy::Got,
        ..tot.clone()
    };
    let tot_bound = bound_for(&tot, 1, 1).generation_call_bound;
    let got_merges = bound_for(&got, 1, 1).merge_attempt_bound;
    ensure(tot_bound == 12 && got_merges == 17, || {
        format!("reference bounds: tot {tot_bound}, got merges {got_merges}")
    })?;

    if unequal_cells.is_empty() {
        Ok(format!(
            "{runs} runs within bounds, generation calls equal the closed form in all {} cot/tot cells, {elapsed:?}",
            equal_cells.len()
        ))
    } else {
        let listing: Vec<String> = unequal_cells
            .iter()
            .map(|(cell, (got, want))| format!("{cell}: {got} < {want}"))
            .collect();
        Err(format!(
            "{runs} runs within bounds ({elapsed:?}), but generation calls fall short of the closed form in {} of {} \
             cot/tot cells; a frontier capped at t cannot reach k(t^D-1)/(t-1) when D >= 3 and t >= 2 or when k < t: {}",
            unequal_cells.len(),
            unequal_cells.len() + equal_cells.len(),
            listing.join("; ")
        ))
    }
}

// ---------------------------------------------------------------------------
// 4. Exploration against brute-force closure

fn random_graph(rng: &mut ChaCha8Rng) -> KnowledgeGraph {
    let n = rng.gen_range(2..=50);
    let relations = ["r1", "r2", "r3"];
    let nodes = (0..n).map(|i| {
        let mut out_edges = IndexMap::new();
        for r in relations {
            if rng.gen_bool(0.5) {
                let mut tails: Vec<String> = Vec::new();
                for _ in 0..rng.gen_range(1..=3) {
                    let t = format!("v{}", rng.gen_range(0..n));
                    if !tails.contains(&t) {
                        tails.push(t);
                    }
                }
                out_edges.insert(r.to_string(), tails);
            }
        }
        NodeRecord {
            id: format!("v{i}"),
            node_type: "T".into(),
            features: IndexMap::from([("name".to_string(), format!("item {i}"))]),
            out_edges,
        }
    });
    KnowledgeGraph::from_nodes(nodes.collect::<Vec<_>>()).expect("valid random graph")
}

fn closure(graph: &KnowledgeGraph, anchors: &[String], d: usize) -> BTreeSet<(String, String, String)> {
    let mut dist: HashMap<String, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    for a in anchors {
        dist.insert(a.clone(), 0);
        queue.push_back(a.clone());
    }
    while let Some(id) = queue.pop_front() {
        let here = dist[&id];
        if here + 1 >= d {
            continue;
        }
        for tails in graph.node(&id).expect("node").out_edges.values() {
            for t in tails {
                if !dist.contains_key(t) {
                    dist.insert(t.clone(), here + 1);
                    queue.push_back(t.clone());
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    for (id, &depth) in &dist {
        if depth >= d {
            continue;
        }
        for (r, tails) in &graph.node(id).expect("node").out_edges {
            for t in tails {
                out.insert((id.clone(), r.clone(), t.clone()));
            }
        }
    }
    out
}

/// Keeps every relation and tail it is offered and never stops early.
fn permissive(req: &CompletionRequest) -> Result<String, LlmError> {
    let line = |label: &str| {
        req.prompt
            .lines()
            .rev()
            .find_map(|l| l.strip_prefix(label))
            .unwrap_or("")
            .trim()
            .to_string()
    };
    Ok(match req.tag.as_str() {
        tags::PRUNE_RELATIONS => format!("{{{{{}}}}}", line("Relations:")),
        tags::PRUNE_ENTITIES => format!("{{{{{}}}}}", line("Tail Entities:")),
        tags::ATTRIBUTES => "{{None}}".into(),
        tags::END_CHECK => "[No]".into(),
        other => return Err(LlmError::InvalidRequest(format!("unexpected tag {other}"))),
    })
}

fn explore_closure() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let prompts = PromptRegistry::bare();
    let backend = FnBackend(permissive);
    let q = Question::new("x", "Which items are reachable?", "none");
    let mut compared = 0;
    let mut triples = 0;
    for instance in 0..20 {
        let graph = random_graph(&mut rng);
        let ids: Vec<String> = graph.nodes().map(|n| n.id.clone()).collect();
        let count = rng.gen_range(1..=3.min(ids.len()));
        let anchors: Vec<String> = ids.choose_multiple(&mut rng, count).cloned().collect();
        for d in 1..=3 {
            let meter = Meter::new(false);
            let ctx = Context::new(&graph, Gateway::new(&backend, &meter), &prompts);
            let out = explore(
                &ctx,
                &q,
                &anchors,
                ExplorationState::new(),
                &ExploreConfig::uncapped(d),
                "",
            )
            .map_err(err)?;
            let found: Vec<(String, String, String)> = out
                .state
                .found_triples
                .iter()
                .map(|t| (t.head_id.clone(), t.relation.clone(), t.tail_id.clone()))
                .collect();
            let set: BTreeSet<_> = found.iter().cloned().collect();
            ensure(set.len() == found.len(), || {
                format!("instance {instance} d={d}: duplicate triples")
            })?;
            let want = closure(&graph, &anchors, d);
            ensure(set == want, || {
                format!(
                    "instance {instance} d={d}: {} found vs {} in closure; missing {:?}; extra {:?}",
                    set.len(),
                    want.len(),
                    want.difference(&set).take(3).collect::<Vec<_>>(),
                    set.difference(&want).take(3).collect::<Vec<_>>()
                )
            })?;
            compared += 1;
            triples += want.len();
        }
    }
    Ok(format!(
        "{compared} explorations matched the closure ({triples} triples in total)"
    ))
}

// ---------------------------------------------------------------------------
// 5. Search-structure invariants under randomized scripts

/// Seeded random replies keyed by tag. Each call draws from a stream
/// derived from the seed and the call's position, so two runs issuing the
/// same call sequence see the same replies.
struct RandomScript {
    seed: u64,
    calls: AtomicU64,
    nodes: Vec<(String, String)>,
}

impl RandomScript {
    fn new(seed: u64, graph: &KnowledgeGraph) -> Self {
        Self {
            seed,
            calls: AtomicU64::new(0),
            nodes: graph.nodes().map(|n| (n.id.clone(), n.name().to_string())).collect(),
        }
    }

    fn reply(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ call);
        let (id, name) = &self.nodes[rng.gen_range(0..self.nodes.len())];
        let roll: f64 = rng.gen();
        Ok(match req.tag.as_str() {
            tags::THOUGHT | tags::REASK => match roll {
                r if r < 0.05 => return Err(LlmError::Transport("connection reset".into())),
                r if r < 0.20 => format!("Thought: That settles it.\nAction: Finish[{name}]"),
                r if r < 0.30 => String::new(),
                r if r < 0.40 => "I am not sure what to do.".into(),
                r if r < 0.70 => format!("Thought: Find {name}.\nAction: RetrieveNode[{name}]"),
                _ => format!(
                    "Thought: Inspect {id}.\nAction: NodeFeature[{id}, code], NeighbourCheck[{id}, links-to], NodeDegree[{id}, links-to]"
                ),
            },
            tags::EXTRACT => match roll {
                r if r < 0.2 => "nothing".into(),
                _ => format!("{{{{{name}}}}}"),
            },
            tags::PRUNE_RELATIONS | tags::PRUNE_ENTITIES => match roll {
                r if r < 0.5 => permissive(req)?,
                _ => "{{}}".into(),
            },
            tags::ATTRIBUTES => match roll {
                r if r < 0.5 => "{{code}}".into(),
                _ => "{{None}}".into(),
            },
            tags::END_CHECK => if roll < 0.4 { "[Yes]" } else { "[No]" }.into(),
            tags::ANSWER => match roll {
                r if r < 0.7 => format!("Finish[{name}]"),
                _ => "unsure".into(),
            },
            tags::SELECT => match roll {
                r if r < 0.3 => "garbage".into(),
                _ => {
                    let ids: Vec<String> = (0..rng.gen_range(1..=4)).map(|_| rng.gen_range(0..12).to_string()).collect();
                    format!("The best choice is {{{{{}}}}}", ids.join(", "))
                }
            },
            tags::SCORE => match roll {
                r if r < 0.2 => "no idea".into(),
                _ => format!("{:.2}", rng.gen::<f64>() * 1.4 - 0.2),
            },
            tags::MERGE => match roll {
                r if r < 0.2 => String::new(),
                r if r < 0.4 => format!("Finish[{name}]"),
                _ => format!("Both chains point at {name}."),
            },
            other => format!("unscripted tag {other}"),
        })
    }
}

fn structure_violations(out: &kgthought::search::SearchOutcome, cfg: &SearchConfig) -> Result<(), String> {
    let g = &out.graph;
    g.validate(cfg.strategy, cfg.t)?;
    ensure(g.frontier.len() <= cfg.t, || "frontier exceeds t".into())?;
    let mut last = 0;
    for r in &g.rounds {
        ensure(r.depth > last, || "round depth did not increase".into())?;
        last = r.depth;
        ensure(r.retained.len() <= cfg.t, || {
            format!("round {} keeps more than t", r.depth)
        })?;
    }
    let pruned_ever: BTreeSet<usize> = g
        .states
        .iter()
        .filter(|s| s.status == StateStatus::Pruned)
        .map(|s| s.id)
        .collect();
    for r in &g.rounds {
        ensure(r.retained.iter().all(|id| !pruned_ever.contains(id)), || {
            "pruned state retained".into()
        })?;
    }
    ensure(g.frontier.iter().all(|id| !pruned_ever.contains(id)), || {
        "pruned state on frontier".into()
    })?;
    for s in &g.states {
        ensure(s.parents.iter().all(|&p| p < s.id), || {
            format!("state {} has a younger parent", s.id)
        })?;
        match cfg.strategy {
            Strategy::Got => ensure(s.parents.len() <= 2, || format!("state {} has >2 parents", s.id))?,
            _ => ensure(s.parents.len() <= 1, || format!("state {} has several parents", s.id))?,
        }
        if s.parents.len() == 1 {
            ensure(s.depth == g.states[s.parents[0]].depth + 1, || {
                format!("state {} skips a layer", s.id)
            })?;
        }
    }
    for r in &g.rounds {
        for &m in &r.merges {
            ensure(g.states[m].parents.len() == 2, || {
                format!("merge state {m} lacks two parents")
            })?;
        }
    }
    Ok(())
}

fn search_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let prompts = PromptRegistry::bare();
    let runs = 600;
    let mut equivalences = 0;
    let mut finished = 0;
    for run in 0..runs {
        let spec = SyntheticSpec {
            nodes: rng.gen_range(4..=16),
            relations: vec!["links-to".into(), "part-of".into()],
            ..SyntheticSpec::default()
        };
        let graph = generate_synthetic_graph(rng.gen(), &spec).map_err(err)?;
        let strategy = Strategy::ALL[rng.gen_range(0..3)];
        let interaction = Interaction::ALL[rng.gen_range(0..2)];
        let n = rng.gen_range(1..=5);
        let cfg = match strategy {
            Strategy::Cot => SearchConfig::cot(interaction, n),
            _ => SearchConfig {
                strategy,
                interaction,
                evaluator: Evaluator::ALL[rng.gen_range(0..2)],
                k: rng.gen_range(1..=3),
                t: rng.gen_range(1..=3),
                d_max: rng.gen_range(1..=4),
                score_votes: rng.gen_range(1..=2),
                ..SearchConfig::default()
            },
        };
        let mut cfg = cfg;
        cfg.explore.search_depth = rng.gen_range(1..=2);
        let seed: u64 = rng.gen();
        let q = Question::new(format!("p{run}"), "Which entity links onward?", "none");

        let backend = FnBackend({
            let script = RandomScript::new(seed, &graph);
            move |req: &CompletionRequest| script.reply(req)
        });
        let meter = Meter::new(false);
        let ctx = Context::new(&graph, Gateway::new(&backend, &meter), &prompts);
        let out = run_search(&ctx, &q, &cfg).map_err(|e| format!("run {run}: {e}"))?;
        structure_violations(&out, &cfg).map_err(|e| format!("run {run} ({strategy}/{interaction}): {e}"))?;
        let bound = bound_for(&cfg, n as u64, cfg.explore.search_depth as u64);
        let verdict = check(&out.counters, &bound);
        ensure(verdict.ok, || format!("run {run}: {:?}", verdict.violations))?;
        finished += usize::from(out.answer.is_some());

        if strategy == Strategy::Cot {
            let tot = SearchConfig {
                strategy: Strategy::Tot,
                k: 1,
                t: 1,
                d_max: n,
                ..cfg.clone()
            };
            let backend = FnBackend({
                let script = RandomScript::new(seed, &graph);
                move |req: &CompletionRequest| script.reply(req)
            });
            let meter = Meter::new(false);
            let ctx = Context::new(&graph, Gateway::new(&backend, &meter), &prompts);
            let other = run_search(&ctx, &q, &tot).map_err(err)?;
            ensure(other == out, || {
                format!("run {run}: cot and tot(k=1, t=1) traces differ")
            })?;
            equivalences += 1;
        }
    }
    Ok(format!(
        "{runs} randomized runs hold every invariant ({finished} answered); {equivalences} cot runs equal tot(k=1, t=1)"
    ))
}

// ---------------------------------------------------------------------------
// 6. Evaluator contracts

fn candidate(id: usize, thought: &str) -> ThoughtState {
    ThoughtState {
        id,
        depth: 1,
        thought: thought.into(),
        chain: vec![thought.into()],
        parents: vec![0],
        status: StateStatus::Active,
        score: None,
        evidence: Evidence::default(),
        error: None,
    }
}

/// Replies to a score prompt with the number after `score=` in it.
fn scripted_score(req: &CompletionRequest) -> Result<String, LlmError> {
    let at = req
        .prompt
        .rfind("score=")
        .ok_or(LlmError::InvalidRequest("no score marker".into()))?;
    let n: String = req.prompt[at + 6..]
        .chars()
        .take_while(|c| c.is_ascii_digit() || *c == '.')
        .collect();
    Ok(format!("I estimate {n}"))
}

fn top_t_oracle(scores: &[(usize, f64)], t: usize) -> BTreeSet<usize> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().take(t).map(|(id, _)| id).collect()
}

fn evaluator_contracts() -> Check {
    let graph = generate_synthetic_graph(1, &SyntheticSpec::default()).map_err(err)?;
    let prompts = PromptRegistry::bare();
    let q = Question::new("e", "Which chain is best?", "none");
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    let backend = FnBackend(scripted_score);
    let meter = Meter::new(false);
    let ctx = Context::new(&graph, Gateway::new(&backend, &meter), &prompts);
    for (scores, t) in [
        (vec![0.5, 0.9, 0.5, 0.2, 0.5, 0.1], 2),
        (vec![0.3, 0.3, 0.3, 0.3, 0.3], 3),
        (vec![0.7, 0.1, 0.7, 0.7, 0.95, 0.0, 0.7], 4),
    ] {
        let states: Vec<ThoughtState> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| candidate(i + 1, &format!("chain {} score={s}", i + 1)))
            .collect();
        let pairs: Vec<(usize, f64)> = scores.iter().enumerate().map(|(i, &s)| (i + 1, s)).collect();
        let want = top_t_oracle(&pairs, t);
        for shuffle in 0..100 {
            let mut views: Vec<&ThoughtState> = states.iter().collect();
            views.shuffle(&mut rng);
            let (kept, _) = evaluate_score(&ctx, &q, &views, t, 1).map_err(err)?;
            let ids: BTreeSet<usize> = kept.iter().map(|&p| views[p].id).collect();
            ensure(ids == want, || {
                format!("shuffle {shuffle}: kept {ids:?}, expected {want:?}")
            })?;
        }
    }

    let states: Vec<ThoughtState> = (1..=5).map(|i| candidate(i, &format!("chain {i}"))).collect();
    let views: Vec<&ThoughtState> = states.iter().collect();
    let malformed = [
        "",
        "no idea",
        "{{}}",
        "{{0, 99}}",
        "{{2, 2, 2}}",
        "The best choice is {{banana}}",
        "[[[",
        "{{-1}}",
    ];
    let mut cases = 0;
    for reply in malformed {
        let backend = FnBackend(move |_: &CompletionRequest| Ok(reply.to_string()));
        let meter = Meter::new(false);
        let ctx = Context::new(&graph, Gateway::new(&backend, &meter), &prompts);
        for t in 1..=4 {
            let kept = evaluate_select(&ctx, &q, &views, t).map_err(err)?;
            let distinct: BTreeSet<usize> = kept.iter().copied().collect();
            ensure(
                kept.len() == t && distinct.len() == t && kept.iter().all(|&p| p < views.len()),
                || format!("reply {reply:?} t={t}: kept {kept:?}"),
            )?;
            if !reply.contains('2') {
                ensure(kept == (0..t).collect::<Vec<_>>(), || {
                    format!("reply {reply:?} t={t}: fallback kept {kept:?}, not the oldest")
                })?;
            }
            cases += 1;
        }
    }
    Ok(format!(
        "score argmax stable over 300 shuffles with ties to the oldest; select fills t in {cases} malformed cases"
    ))
}

// ---------------------------------------------------------------------------
// 7. Determinism

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_kgthought")
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(bin()).args(args).output().map_err(err)?;
    ensure(out.status.success(), || {
        format!(
            "{args:?} failed: {}{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn tree_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).expect("under root").to_path_buf();
                out.insert(rel, fs::read(&path).expect("readable file"));
            }
        }
    }
    out
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(err)?;
    let dir = tmp.path();
    let s = |p: &Path| p.to_string_lossy().into_owned();
    let (kg, qs, script, judge) = (
        dir.join("g.nodes"),
        dir.join("q.lines"),
        dir.join("script.replay"),
        dir.join("judge.replay"),
    );
    run_cli(&[
        "gen-graph",
        "--seed",
        "3",
        "--nodes",
        "20",
        "--out",
        &s(&kg),
        "--questions",
        "6",
        "--questions-out",
        &s(&qs),
    ])?;
    let graph = load_graph(&kg).map_err(err)?;
    let anchor = graph.nodes().nth(2).expect("nodes").name().to_string();
    fs::write(&script, endless_script(&anchor).to_lines()).map_err(err)?;
    fs::write(
        &judge,
        ReplayScript::from_pairs(
            [("^You are given a question", "[No]"), ("^A model answered", "[3]")],
            false,
        )
        .map_err(err)?
        .to_lines(),
    )
    .map_err(err)?;

    let configs: [&[&str]; 3] = [
        &["--strategy", "cot", "--interaction", "agent", "--steps", "3"],
        &[
            "--strategy",
            "tot",
            "--interaction",
            "explore",
            "--evaluator",
            "score",
            "--branching",
            "2",
            "--retain",
            "2",
            "--max-depth",
            "2",
            "--search-depth",
            "2",
        ],
        &[
            "--strategy",
            "got",
            "--interaction",
            "agent",
            "--branching",
            "2",
            "--retain",
            "2",
            "--max-depth",
            "2",
            "--judge",
            "llm",
        ],
    ];
    let mut files = 0;
    for (i, extra) in configs.iter().enumerate() {
        let mut outs = Vec::new();
        for attempt in 0..2 {
            let out = dir.join(format!("run{i}-{attempt}"));
            let mut args = vec!["run", "--kg", kg.to_str().unwrap(), "--questions", qs.to_str().unwrap()];
            let (replay, out_s, judge_s) = (s(&script), s(&out), s(&judge));
            args.extend(["--replay", &replay, "--out", &out_s, "--judge-replay", &judge_s]);
            args.extend(extra.iter().copied());
            run_cli(&args)?;
            outs.push(out);
        }
        let (a, b) = (tree_files(&outs[0]), tree_files(&outs[1]));
        ensure(a.len() >= 8, || format!("config {i}: only {} files written", a.len()))?;
        ensure(a == b, || format!("config {i}: outputs differ between identical runs"))?;
        files += a.len();

        let rescored = dir.join(format!("rescored{i}"));
        run_cli(&["score", &s(&outs[0]), "--out", &s(&rescored)])?;
        for name in ["results.lines", "report.table"] {
            let (orig, again) = (
                fs::read(outs[0].join(name)).map_err(err)?,
                fs::read(rescored.join(name)).map_err(err)?,
            );
            ensure(orig == again, || format!("config {i}: rescored {name} differs"))?;
        }
    }
    Ok(format!(
        "3 configurations run twice with {files} byte-identical files; score reproduces results"
    ))
}

// ---------------------------------------------------------------------------
// 8. Error taxonomy

fn error_taxonomy() -> Check {
    let tmp = tempfile::tempdir().map_err(err)?;
    let dir = tmp.path();
    let gold = "head, skin of body";
    let base = "What anatomy can be expressed by gene KRT39?";
    let questions: Vec<Question> = ["limit", "found", "lacks", "correct"]
        .iter()
        .map(|k| Question::new(*k, format!("Q-{k}: {base}"), gold))
        .collect();
    let qpath = dir.join("q.lines");
    fs::write(&qpath, kgthought::eval::questions_to_lines(&questions)).map_err(err)?;

    let agent = ReplayScript::from_pairs(
        [
            (
                "Question: Q-limit",
                "Thought: Count again.\nAction: NodeDegree[390792, Anatomy-expresses-Gene]",
            ),
            (
                "(?s)Question: Q-found.*Observation 1:",
                "Thought: Done.\nAction: Finish[liver]",
            ),
            (
                "Question: Q-found",
                "Thought: Names.\nAction: NodeFeature[UBERON:0000033, name], NodeFeature[UBERON:0002097, name]",
            ),
            ("Question: Q-lacks", "Thought: Guess.\nAction: Finish[liver]"),
            (
                "Question: Q-correct",
                "Thought: Known.\nAction: Finish[head, skin of body]",
            ),
        ],
        false,
    )
    .map_err(err)?;
    let judge = ReplayScript::from_pairs(
        [
            (
                "(?s)^You are given a question.*Model answer: head, skin of body\n",
                "[Yes]",
            ),
            ("^You are given a question", "[No]"),
            ("(?s)^A model answered.*Evidence:\n.*skin of body", "[2]"),
            ("^A model answered", "[3]"),
        ],
        false,
    )
    .map_err(err)?;
    let (agent_path, judge_path) = (dir.join("agent.replay"), dir.join("judge.replay"));
    fs::write(&agent_path, agent.to_lines()).map_err(err)?;
    fs::write(&judge_path, judge.to_lines()).map_err(err)?;

    let mut cfg = RunConfig::new(
        fixture("krt39.nodes"),
        &qpath,
        BackendSpec::Replay {
            path: agent_path,
            strict: false,
        },
        dir.join("out"),
    );
    cfg.n = 3;
    cfg.judge = JudgeMode::Llm;
    cfg.judge_replay = Some(judge_path);
    let summary = run_experiment(&cfg).map_err(err)?;
    let by_qid: HashMap<&str, _> = summary.traces.iter().map(|t| (t.question.qid.as_str(), t)).collect();
    let expected = [
        ("limit", ErrorClass::ReachedLimit),
        ("found", ErrorClass::FoundNotReturned),
        ("lacks", ErrorClass::WrongStep),
        ("correct", ErrorClass::Correct),
    ];
    for (qid, class) in expected {
        let trace = by_qid.get(qid).ok_or_else(|| format!("no trace for {qid}"))?;
        ensure(trace.error.is_none(), || format!("{qid}: {:?}", trace.error))?;
        let j = &trace.judgement;
        ensure(j.error_class == Some(class), || {
            format!("{qid}: labelled {:?}", j.error_class)
        })?;
    }
    let limit = &by_qid["limit"].judgement;
    ensure(limit.judge_calls + limit.classify_calls == 0, || {
        format!("limit case spent {limit:?}")
    })?;
    let correct = &by_qid["correct"].judgement;
    ensure(correct.classify_calls == 0, || {
        format!("correct case spent {correct:?}")
    })?;
    let on_disk = read_traces(&cfg.out_dir.join("traces")).map_err(err)?;
    ensure(on_disk.len() == 4, || "traces missing on disk".into())?;
    Ok(
        "limit/found/lacks/correct labelled reached_limit/found_not_returned/wrong_step/correct; \
        no labelling calls for the limit and correct cases"
            .into(),
    )
}

// ---------------------------------------------------------------------------
// 9. Live endpoint smoke

fn live_smoke(endpoint: String, model: String) -> Check {
    let tmp = tempfile::tempdir().map_err(err)?;
    let dir = tmp.path();
    let graph = generate_synthetic_graph(
        11,
        &SyntheticSpec {
            nodes: 30,
            ..SyntheticSpec::default()
        },
    )
    .map_err(err)?;
    let (kg, qs) = (dir.join("g.nodes"), dir.join("q.lines"));
    save_graph(&graph, &kg).map_err(err)?;
    fs::write(
        &qs,
        kgthought::eval::questions_to_lines(&synthetic_questions(&graph, 5, 11)),
    )
    .map_err(err)?;
    let mut cfg = RunConfig::new(&kg, &qs, BackendSpec::Wire { endpoint, model }, dir.join("out"));
    cfg.n = 8;
    let summary = run_experiment(&cfg).map_err(err)?;
    for t in &summary.traces {
        ensure(t.error.is_none(), || format!("{}: {:?}", t.question.qid, t.error))?;
        ensure(t.bound_check.ok, || {
            format!("{}: {:?}", t.question.qid, t.bound_check.violations)
        })?;
        ensure(t.answer.as_deref().is_some_and(|a| !a.trim().is_empty()), || {
            format!("{}: no answer", t.question.qid)
        })?;
    }
    Ok(format!(
        "{} live questions answered within bounds",
        summary.traces.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("golden-trace fidelity", golden_traces),
        ("rouge-l oracle equivalence", rouge_oracle),
        ("cost-bound conformance", cost_grid),
        ("exploration oracle equivalence", explore_closure),
        ("search-structure invariants", search_invariants),
        ("evaluator contracts", evaluator_contracts),
        ("determinism and replayability", determinism),
        ("error-taxonomy mechanics", error_taxonomy),
    ];
    let mut failures = 0;
    let mut report = |n: usize, name: &str, result: Check| match result {
        Ok(detail) => println!("PASS {n} {name}: {detail}"),
        Err(detail) => {
            failures += 1;
            println!("FAIL {n} {name}: {detail}");
        }
    };
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        report(i + 1, name, result);
    }
    match (
        std::env::var("KGTHOUGHT_LIVE_ENDPOINT"),
        std::env::var("KGTHOUGHT_LIVE_MODEL"),
    ) {
        (Ok(endpoint), Ok(model)) => report(9, "live-wire smoke", live_smoke(endpoint, model)),
        _ => println!(
            "SKIP 9 live-wire smoke: set KGTHOUGHT_LIVE_ENDPOINT, KGTHOUGHT_LIVE_MODEL and {API_KEY_ENV} to run"
        ),
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
