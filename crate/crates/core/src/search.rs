//! Chain, tree and graph search over thought states.
//!
//! Every round expands each frontier state `k` ways (one thought-generation
//! call per child, followed by the interaction driver's grounding), optionally
//! merges adjacent expansions pairwise, and keeps at most `t` candidates.
//! A chain is the special case `k = t = 1`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{run_agent_step, AgentConfig, Scratchpad, ScratchpadStep, StepResult, Termination};
use crate::context::Context;
use crate::cost::{kinds, tags, CostCounters};
use crate::eval::Question;
use crate::explore::{explore, extract_entities, resolve_entities, ExplorationState, ExploreConfig};
use crate::llm::parse::{parse_bracketed_answer, parse_finish, parse_integers, parse_last_number};
use crate::llm::{CompletionRequest, Decoding, LlmError, TemplateName};

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s.to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("unknown {} `{other}`", stringify!($name).to_ascii_lowercase())),
                }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Cot,
    Tot,
    Got,
}
string_enum!(Strategy { Cot => "cot", Tot => "tot", Got => "got" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    Agent,
    Explore,
}
string_enum!(Interaction { Agent => "agent", Explore => "explore" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    Select,
    Score,
}
string_enum!(Evaluator { Select => "select", Score => "score" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub strategy: Strategy,
    pub interaction: Interaction,
    pub evaluator: Evaluator,
    /// Children generated per frontier state.
    pub k: usize,
    /// States retained after each evaluation round.
    pub t: usize,
    /// Maximum number of rounds; the step budget for a chain.
    pub d_max: usize,
    pub score_votes: usize,
    pub max_actions_per_step: usize,
    pub thought_temperature: f64,
    pub scratchpad_char_budget: Option<usize>,
    pub explore: ExploreConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Tot,
            interaction: Interaction::Agent,
            evaluator: Evaluator::Select,
            k: 3,
            t: 3,
            d_max: 10,
            score_votes: 1,
            max_actions_per_step: 4,
            thought_temperature: 0.7,
            scratchpad_char_budget: None,
            explore: ExploreConfig::default(),
        }
    }
}

impl SearchConfig {
    /// A chain of at most `n` steps.
    pub fn cot(interaction: Interaction, n: usize) -> Self {
        Self {
            strategy: Strategy::Cot,
            interaction,
            k: 1,
            t: 1,
            d_max: n,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 || self.t == 0 || self.d_max == 0 {
            return Err("k, t and d_max must be at least 1".into());
        }
        if self.strategy == Strategy::Cot && (self.k != 1 || self.t != 1) {
            return Err("cot requires k = t = 1".into());
        }
        if self.score_votes == 0 {
            return Err("score votes must be at least 1".into());
        }
        if self.max_actions_per_step == 0 {
            return Err("max actions per step must be at least 1".into());
        }
        self.explore.validate()
    }

    fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            max_actions_per_step: self.max_actions_per_step,
            temperature: self.thought_temperature,
            scratchpad_char_budget: self.scratchpad_char_budget,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateStatus {
    Active,
    Pruned,
    Finished,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub exploration: ExplorationState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scratchpad: Option<Scratchpad>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

impl Evidence {
    /// Deduplicated union of both evidence sets; answers are not inherited.
    pub fn union(&self, other: &Evidence) -> Evidence {
        let scratchpad = match (&self.scratchpad, &other.scratchpad) {
            (Some(a), Some(b)) => Some(a.merged_with(b)),
            (a, b) => a.clone().or_else(|| b.clone()),
        };
        Evidence {
            exploration: self.exploration.union(&other.exploration),
            scratchpad,
            answer: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThoughtState {
    pub id: usize,
    pub depth: usize,
    pub thought: String,
    /// Thoughts from the first step through this one.
    pub chain: Vec<String>,
    pub parents: Vec<usize>,
    pub status: StateStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub evidence: Evidence,
    /// Why the state was born pruned, if it was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ThoughtState {
    pub fn is_merge(&self) -> bool {
        self.parents.len() == 2
    }

    /// The state as shown to evaluators and merge prompts.
    pub fn render(&self, ctx: &Context<'_>) -> String {
        let mut out = String::new();
        if let Some(pad) = &self.evidence.scratchpad {
            out.push_str(&pad.render());
        } else {
            out.push_str(&self.chain.join("\n"));
        }
        let triples = self.evidence.exploration.render_triples();
        if !triples.is_empty() {
            out.push_str("\nTriples:\n");
            out.push_str(&triples);
        }
        let attributes = self.evidence.exploration.render_attributes(ctx);
        if !attributes.is_empty() {
            out.push_str("\nAttributes:\n");
            out.push_str(&attributes);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub depth: usize,
    /// Expansions in generation order, born-pruned ones included.
    pub expansions: Vec<usize>,
    /// States created by merging pairs of expansions.
    pub merges: Vec<usize>,
    /// States kept by the evaluator, in creation order.
    pub retained: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningGraph {
    /// Indexed by state id; id 0 is the root.
    pub states: Vec<ThoughtState>,
    pub frontier: Vec<usize>,
    pub rounds: Vec<Round>,
    pub answer: Option<String>,
}

impl ReasoningGraph {
    /// A graph holding only the root state.
    pub fn new(q: &Question, interaction: Interaction) -> Self {
        let root = ThoughtState {
            id: 0,
            depth: 0,
            thought: q.text.clone(),
            chain: Vec::new(),
            parents: Vec::new(),
            status: StateStatus::Active,
            score: None,
            evidence: Evidence {
                scratchpad: (interaction == Interaction::Agent).then(Scratchpad::default),
                ..Evidence::default()
            },
            error: None,
        };
        Self {
            states: vec![root],
            frontier: vec![0],
            rounds: Vec::new(),
            answer: None,
        }
    }

    pub fn state(&self, id: usize) -> &ThoughtState {
        &self.states[id]
    }

    fn push(&mut self, mut s: ThoughtState) -> usize {
        s.id = self.states.len();
        self.states.push(s);
        self.states.len() - 1
    }

    /// The state the final answer came from, if any.
    pub fn answer_state(&self) -> Option<&ThoughtState> {
        let last = self.rounds.last()?;
        best_finished(&self.states, &last.retained)
    }

    /// Checks the structural invariants: ids, acyclic parents, parent
    /// multiplicity, depth layering, frontier size and pruning.
    pub fn validate(&self, strategy: Strategy, t: usize) -> Result<(), String> {
        for (i, s) in self.states.iter().enumerate() {
            if s.id != i {
                return Err(format!("state at position {i} has id {}", s.id));
            }
            for &p in &s.parents {
                if p >= i {
                    return Err(format!("state {i} has parent {p} that is not older"));
                }
            }
            match (i, s.parents.len()) {
                (0, 0) => {}
                (0, _) => return Err("root has parents".into()),
                (_, 1) => {
                    if s.depth != self.states[s.parents[0]].depth + 1 {
                        return Err(format!("state {i} is not one level below its parent"));
                    }
                }
                (_, 2) if strategy == Strategy::Got => {
                    let (a, b) = (&self.states[s.parents[0]], &self.states[s.parents[1]]);
                    if a.depth != b.depth || s.depth != a.depth {
                        return Err(format!("merge state {i} does not share its parents' layer"));
                    }
                }
                (_, n) => return Err(format!("state {i} has {n} parents")),
            }
            if s.status == StateStatus::Finished && s.evidence.answer.is_none() {
                return Err(format!("finished state {i} carries no answer"));
            }
        }
        let mut last_depth = 0;
        for r in &self.rounds {
            if r.depth <= last_depth {
                return Err(format!("round depth {} does not increase", r.depth));
            }
            last_depth = r.depth;
            if r.retained.len() > t {
                return Err(format!("round {} retains {} > t = {t}", r.depth, r.retained.len()));
            }
            for &id in &r.retained {
                let s = self.states.get(id).ok_or_else(|| format!("unknown state {id}"))?;
                if !r.expansions.contains(&id) && !r.merges.contains(&id) {
                    return Err(format!("retained state {id} was not a candidate of round {}", r.depth));
                }
                if s.status == StateStatus::Pruned || s.depth != r.depth {
                    return Err(format!("retained state {id} is pruned or off-layer"));
                }
            }
            for &id in r.expansions.iter().chain(&r.merges) {
                if !r.retained.contains(&id) && self.states[id].status != StateStatus::Pruned {
                    return Err(format!("dropped state {id} is not marked pruned"));
                }
            }
        }
        for &id in &self.frontier {
            if self.states[id].status == StateStatus::Pruned {
                return Err(format!("pruned state {id} is on the frontier"));
            }
        }
        Ok(())
    }
}

fn best_finished<'s>(states: &'s [ThoughtState], ids: &[usize]) -> Option<&'s ThoughtState> {
    ids.iter()
        .map(|&i| &states[i])
        .filter(|s| s.status == StateStatus::Finished)
        .min_by(|a, b| {
            let sa = a.score.unwrap_or(f64::NEG_INFINITY);
            let sb = b.score.unwrap_or(f64::NEG_INFINITY);
            sb.total_cmp(&sa).then(a.id.cmp(&b.id))
        })
}

fn child_of(parent: &ThoughtState, thought: String) -> ThoughtState {
    let mut chain = parent.chain.clone();
    chain.push(thought.clone());
    ThoughtState {
        id: 0,
        depth: parent.depth + 1,
        thought,
        chain,
        parents: vec![parent.id],
        status: StateStatus::Active,
        score: None,
        evidence: Evidence {
            answer: None,
            ..parent.evidence.clone()
        },
        error: None,
    }
}

fn born_pruned(parent: &ThoughtState, err: &LlmError) -> ThoughtState {
    let mut s = child_of(parent, String::new());
    s.status = StateStatus::Pruned;
    s.error = Some(err.to_string());
    s
}

/// Strips a leading `Next Thought:` or `Thought 3:` label.
fn strip_thought_label(reply: &str) -> String {
    let mut s = reply.trim();
    for label in ["Next Thought", "Thought"] {
        if let Some(rest) = s.strip_prefix(label) {
            let rest = rest.trim_start_matches(|c: char| c.is_ascii_digit() || c == ' ');
            if let Some(rest) = rest.strip_prefix(':') {
                s = rest.trim();
                break;
            }
        }
    }
    s.to_string()
}

const THOUGHT_REMINDER: &str =
    "Format reminder: reply with the next thought only. Write Finish[answer] when the question can be answered.";

fn search_thought_vars(
    ctx: &Context<'_>,
    q: &Question,
    state: &ExplorationState,
    chain: &[String],
) -> BTreeMap<&'static str, String> {
    BTreeMap::from([
        ("graph_definition", ctx.graph.definition()),
        ("question", q.text.clone()),
        ("triples", state.render_triples()),
        ("thoughts", chain.join("\n")),
        ("attributes", state.render_attributes(ctx)),
    ])
}

fn explore_child(
    ctx: &Context<'_>,
    q: &Question,
    parent: &ThoughtState,
    cfg: &SearchConfig,
) -> Result<ThoughtState, LlmError> {
    let vars = search_thought_vars(ctx, q, &parent.evidence.exploration, &parent.chain);
    let prompt = ctx.prompts.render(TemplateName::SearchThought, &q.domain, &vars)?;
    let req = CompletionRequest::new(prompt, Decoding::sampling(cfg.thought_temperature), tags::THOUGHT);
    let nonempty = |r: &str| Some(strip_thought_label(r)).filter(|t| !t.is_empty());
    let (_, thought) = ctx.gateway.complete_parsed(&req, THOUGHT_REMINDER, nonempty)?;
    let Some(thought) = thought else {
        return Ok(born_pruned(parent, &LlmError::InvalidRequest("empty thought".into())));
    };

    let mut child = child_of(parent, thought.clone());
    if let Some(answer) = parse_finish(&thought) {
        child.status = StateStatus::Finished;
        child.evidence.answer = Some(answer);
        return Ok(child);
    }

    let text = if parent.depth == 0 {
        format!("{}\n{}", q.text, thought)
    } else {
        thought
    };
    let names = extract_entities(ctx, &text, &q.domain)?;
    let anchors = resolve_entities(ctx, &names);
    ctx.gateway.meter().kg_op(kinds::EXPLORE_SEARCH);
    let out = explore(
        ctx,
        q,
        &anchors,
        std::mem::take(&mut child.evidence.exploration),
        &cfg.explore,
        &child.chain.join("\n"),
    )?;
    child.evidence.exploration = out.state;
    if out.sufficient {
        let vars = search_thought_vars(ctx, q, &child.evidence.exploration, &child.chain);
        let prompt = ctx.prompts.render(TemplateName::SearchThought, &q.domain, &vars)?;
        let req = CompletionRequest::new(prompt, Decoding::control(), tags::ANSWER);
        let parse = |r: &str| parse_finish(r).or_else(|| parse_bracketed_answer(r).ok());
        if let (_, Some(answer)) = ctx.gateway.complete_parsed(&req, THOUGHT_REMINDER, parse)? {
            child.status = StateStatus::Finished;
            child.evidence.answer = Some(answer);
        }
    }
    Ok(child)
}

fn agent_child(
    ctx: &Context<'_>,
    q: &Question,
    parent: &ThoughtState,
    cfg: &SearchConfig,
) -> Result<ThoughtState, LlmError> {
    let pad = parent.evidence.scratchpad.clone().unwrap_or_default();
    let (pad, answer) = match run_agent_step(&pad, q, ctx, &cfg.agent_config())? {
        StepResult::Continue(pad) => (pad, None),
        StepResult::Finished(outcome) => (outcome.scratchpad, outcome.answer),
    };
    let thought = pad.steps.last().map(|s| s.thought.clone()).unwrap_or_default();
    let mut child = child_of(parent, thought);
    child.evidence.scratchpad = Some(pad);
    if let Some(answer) = answer {
        child.status = StateStatus::Finished;
        child.evidence.answer = Some(answer);
    }
    Ok(child)
}

/// Generates `k` children of `state`, each from one thought-generation
/// call plus the driver's grounding. A child whose generation fails on
/// transport is born pruned.
pub fn expand(
    ctx: &Context<'_>,
    q: &Question,
    state: &ThoughtState,
    cfg: &SearchConfig,
) -> Result<Vec<ThoughtState>, LlmError> {
    (0..cfg.k)
        .map(|_| {
            let child = match cfg.interaction {
                Interaction::Agent => agent_child(ctx, q, state, cfg),
                Interaction::Explore => explore_child(ctx, q, state, cfg),
            };
            match child {
                Err(e) if e.is_retryable() => Ok(born_pruned(state, &e)),
                other => other,
            }
        })
        .collect()
}

/// Asks once for the ids of the `t` most promising candidates.
///
/// Ids are 1-based positions in `candidates`. Duplicates and out-of-range
/// ids are ignored, and missing slots are filled in candidate order.
/// Returns positions into `candidates`, sorted.
pub fn evaluate_select(
    ctx: &Context<'_>,
    q: &Question,
    candidates: &[&ThoughtState],
    t: usize,
) -> Result<Vec<usize>, LlmError> {
    if candidates.len() <= t {
        return Ok((0..candidates.len()).collect());
    }
    let choices: Vec<String> = candidates
        .iter()
        .enumerate()
        .map(|(i, s)| format!("Choice {}:\n{}", i + 1, s.render(ctx)))
        .collect();
    let vars = BTreeMap::from([
        ("question", q.text.clone()),
        ("retain", t.to_string()),
        ("choices", choices.join("\n\n")),
    ]);
    let prompt = ctx.prompts.render(TemplateName::SelectionVote, &q.domain, &vars)?;
    let reply = ctx
        .gateway
        .complete(&CompletionRequest::new(prompt, Decoding::control(), tags::SELECT))?;
    let mut picked: Vec<usize> = Vec::new();
    if let Ok(span) = parse_bracketed_answer(&reply) {
        for id in parse_integers(&span) {
            if (1..=candidates.len()).contains(&id) && !picked.contains(&(id - 1)) && picked.len() < t {
                picked.push(id - 1);
            }
        }
    }
    for i in 0..candidates.len() {
        if picked.len() >= t {
            break;
        }
        if !picked.contains(&i) {
            picked.push(i);
        }
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Scores every candidate with `votes` calls (last number in the reply,
/// clamped to [0, 1], unparseable votes count 0) and keeps the top `t`.
/// Ties break by state id. Returns positions into `candidates`, sorted,
/// together with each candidate's mean score.
pub fn evaluate_score(
    ctx: &Context<'_>,
    q: &Question,
    candidates: &[&ThoughtState],
    t: usize,
    votes: usize,
) -> Result<(Vec<usize>, Vec<f64>), LlmError> {
    let votes = votes.max(1);
    let mut scores = Vec::with_capacity(candidates.len());
    for s in candidates {
        let vars = BTreeMap::from([("question", q.text.clone()), ("thoughts", s.render(ctx))]);
        let prompt = ctx.prompts.render(TemplateName::ScoreVote, &q.domain, &vars)?;
        let req = CompletionRequest::new(prompt, Decoding::control(), tags::SCORE);
        let mut total = 0.0;
        for _ in 0..votes {
            let reply = ctx.gateway.complete(&req)?;
            total += parse_last_number(&reply).map_or(0.0, |v| v.clamp(0.0, 1.0));
        }
        scores.push(total / votes as f64);
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(candidates[a].id.cmp(&candidates[b].id))
    });
    let mut kept: Vec<usize> = order.into_iter().take(t).collect();
    kept.sort_unstable();
    Ok((kept, scores))
}

/// Keeps `min(t, candidates)` states and marks the rest pruned. Returns
/// the retained ids in creation order.
pub fn select_frontier(
    ctx: &Context<'_>,
    q: &Question,
    graph: &mut ReasoningGraph,
    candidates: &[usize],
    cfg: &SearchConfig,
) -> Result<Vec<usize>, LlmError> {
    let views: Vec<&ThoughtState> = candidates.iter().map(|&i| &graph.states[i]).collect();
    let kept_positions = if views.len() <= cfg.t {
        (0..views.len()).collect()
    } else {
        match cfg.evaluator {
            Evaluator::Select => evaluate_select(ctx, q, &views, cfg.t)?,
            Evaluator::Score => {
                let (kept, scores) = evaluate_score(ctx, q, &views, cfg.t, cfg.score_votes)?;
                for (&id, score) in candidates.iter().zip(scores) {
                    graph.states[id].score = Some(score);
                }
                kept
            }
        }
    };
    let mut retained: Vec<usize> = kept_positions.iter().map(|&p| candidates[p]).collect();
    retained.sort_unstable();
    for &id in candidates {
        if !retained.contains(&id) {
            graph.states[id].status = StateStatus::Pruned;
        }
    }
    Ok(retained)
}

/// Merges two same-depth states into one with both as parents. Returns
/// `None` when the model's reply is empty, in which case nothing changes.
pub fn merge_pair(
    ctx: &Context<'_>,
    q: &Question,
    a: &ThoughtState,
    b: &ThoughtState,
) -> Result<Option<ThoughtState>, LlmError> {
    let mut merged_chain = a.chain.clone();
    for t in &b.chain {
        if !merged_chain.contains(t) {
            merged_chain.push(t.clone());
        }
    }
    let mut evidence = a.evidence.union(&b.evidence);
    let vars = BTreeMap::from([
        ("question", q.text.clone()),
        ("chain_1", a.render(ctx)),
        ("chain_2", b.render(ctx)),
        ("merged_chain", merged_chain.join("\n")),
    ]);
    let prompt = ctx.prompts.render(TemplateName::GotMerge, &q.domain, &vars)?;
    let reply = ctx
        .gateway
        .complete(&CompletionRequest::new(prompt, Decoding::control(), tags::MERGE))?;
    let thought = strip_thought_label(&reply);
    if thought.is_empty() {
        return Ok(None);
    }
    merged_chain.push(thought.clone());
    if let Some(pad) = evidence.scratchpad.as_mut() {
        pad.steps.push(ScratchpadStep {
            index: pad.steps.len() + 1,
            thought: thought.clone(),
            actions: Vec::new(),
            observations: Vec::new(),
            malformed: false,
        });
    }
    let answer = parse_finish(&thought);
    Ok(Some(ThoughtState {
        id: 0,
        depth: a.depth,
        thought,
        chain: merged_chain,
        parents: vec![a.id, b.id],
        status: if answer.is_some() {
            StateStatus::Finished
        } else {
            StateStatus::Active
        },
        score: None,
        evidence: Evidence { answer, ..evidence },
        error: None,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub answer: Option<String>,
    pub termination: Termination,
    pub graph: ReasoningGraph,
    pub counters: CostCounters,
}

/// Breadth-limited search for at most `d_max` rounds.
///
/// The search halts as soon as a retained state is finished; the answer
/// comes from the best finished retained state (score, then creation
/// order). Running out of rounds leaves the answer absent.
pub fn run_search(ctx: &Context<'_>, q: &Question, cfg: &SearchConfig) -> Result<SearchOutcome, LlmError> {
    cfg.validate().map_err(LlmError::Config)?;
    let mut graph = ReasoningGraph::new(q, cfg.interaction);
    let mut termination = Termination::StepLimit;

    for depth in 1..=cfg.d_max {
        let mut expansions = Vec::new();
        for &parent in &graph.frontier.clone() {
            let children = expand(ctx, q, &graph.states[parent], cfg)?;
            for child in children {
                expansions.push(graph.push(child));
            }
        }

        let mut merges = Vec::new();
        if cfg.strategy == Strategy::Got {
            for pair in expansions.chunks_exact(2) {
                let (a, b) = (&graph.states[pair[0]], &graph.states[pair[1]]);
                if a.status != StateStatus::Active || b.status != StateStatus::Active {
                    continue;
                }
                if let Some(m) = merge_pair(ctx, q, a, b)? {
                    merges.push(graph.push(m));
                }
            }
        }

        let candidates: Vec<usize> = expansions
            .iter()
            .chain(&merges)
            .copied()
            .filter(|&i| graph.states[i].status != StateStatus::Pruned)
            .collect();
        let retained = select_frontier(ctx, q, &mut graph, &candidates, cfg)?;
        graph.rounds.push(Round {
            depth,
            expansions,
            merges,
            retained: retained.clone(),
        });

        if let Some(best) = best_finished(&graph.states, &retained) {
            graph.answer = best.evidence.answer.clone();
            graph.frontier = retained;
            termination = Termination::Finished;
            break;
        }
        graph.frontier = retained;
        if graph.frontier.is_empty() {
            break;
        }
    }

    Ok(SearchOutcome {
        answer: graph.answer.clone(),
        termination,
        graph,
        counters: ctx.gateway.meter().snapshot(),
    })
}
