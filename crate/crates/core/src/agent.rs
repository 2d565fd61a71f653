//! Interleaved thought → action → observation loop over the graph.
//!
//! Each step renders the `agent_step` prompt with the full scratchpad,
//! parses the model's `Thought i:` / `Action i:` reply, executes the actions
//! left to right and appends one step. Observation strings are frozen:
//!
//! | action | observation |
//! |---|---|
//! | `RetrieveNode[q]` | `The ID of the node is <id>.` |
//! | `NeighbourCheck[id, r]` | `The neighbors are ['<id>', ...].` |
//! | `NodeFeature[id, k]` | `<id> → <value>` |
//! | `NodeDegree[id, r]` | `The degree of <id> for <r> is <n>.` |
//!
//! Graph errors become observations (`No such node: ...`) so the model can
//! see its mistake.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::Context;
use crate::cost::{kinds, tags};
use crate::eval::Question;
use crate::kg::KgError;
use crate::llm::parse::{split_top_level, unquote};
use crate::llm::{CompletionRequest, Decoding, LlmError, TemplateName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    RetrieveNode,
    NodeFeature,
    NeighborCheck,
    NodeDegree,
    Finish,
}

impl ActionKind {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "RetrieveNode" => ActionKind::RetrieveNode,
            "NodeFeature" => ActionKind::NodeFeature,
            "NeighborCheck" | "NeighbourCheck" => ActionKind::NeighborCheck,
            "NodeDegree" => ActionKind::NodeDegree,
            "Finish" => ActionKind::Finish,
            _ => return None,
        })
    }

    fn arity(self) -> Option<usize> {
        match self {
            ActionKind::RetrieveNode => Some(1),
            ActionKind::NodeFeature | ActionKind::NeighborCheck | ActionKind::NodeDegree => Some(2),
            ActionKind::Finish => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentAction {
    pub kind: ActionKind,
    pub args: Vec<String>,
    /// The span as the model wrote it.
    pub raw: String,
}

impl AgentAction {
    pub fn is_finish(&self) -> bool {
        self.kind == ActionKind::Finish
    }

    /// The Finish payload; empty for `Finish[]`.
    pub fn answer(&self) -> Option<String> {
        self.is_finish().then(|| self.args.first().cloned().unwrap_or_default())
    }
}

impl fmt::Display for AgentAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ActionParseError {
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("`{name}` takes {expected} argument(s), got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("no action span found")]
    NoAction,
}

/// Byte offset just past the `Action` marker (`Action:` or `Action 3:`).
fn action_marker(text: &str) -> Option<(usize, usize)> {
    let mut from = 0;
    while let Some(pos) = text[from..].find("Action") {
        let start = from + pos;
        let rest = &text[start + "Action".len()..];
        let trimmed = rest.trim_start_matches(|c: char| c.is_ascii_digit() || c == ' ');
        if let Some(after) = trimmed.strip_prefix(':') {
            return Some((start, text.len() - after.len()));
        }
        from = start + "Action".len();
    }
    None
}

/// Extracts every `Name[args]` span after the `Action` marker.
///
/// Multiple comma-separated spans are allowed; arguments split at
/// top-level commas only. `RetrieveNode` and `Finish` keep their payload
/// whole.
pub fn parse_actions(text: &str) -> Result<Vec<AgentAction>, ActionParseError> {
    let Some((_, body_start)) = action_marker(text) else {
        return Err(ActionParseError::NoAction);
    };
    let mut body = &text[body_start..];
    if let Some(cut) = body.find("\nObservation") {
        body = &body[..cut];
    }

    let mut actions = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find('[') {
        let name_start = rest[..open]
            .rfind(|c: char| !c.is_ascii_alphabetic())
            .map_or(0, |i| i + 1);
        let name = &rest[name_start..open];
        let mut depth = 0usize;
        let mut close = None;
        for (i, c) in rest[open + 1..].char_indices() {
            match c {
                '[' => depth += 1,
                ']' if depth == 0 => {
                    close = Some(open + 1 + i);
                    break;
                }
                ']' => depth -= 1,
                _ => {}
            }
        }
        let Some(close) = close else { break };
        let payload = &rest[open + 1..close];
        let raw = rest[name_start..=close].to_string();
        rest = &rest[close + 1..];
        if name.is_empty() {
            continue;
        }
        let kind = ActionKind::from_name(name).ok_or_else(|| ActionParseError::UnknownAction(name.to_string()))?;
        let args = match kind {
            ActionKind::RetrieveNode | ActionKind::Finish => {
                let p = unquote(payload.trim()).trim();
                if p.is_empty() {
                    vec![]
                } else {
                    vec![p.to_string()]
                }
            }
            _ => split_top_level(payload),
        };
        if let Some(expected) = kind.arity() {
            if args.len() != expected {
                return Err(ActionParseError::Arity {
                    name: name.to_string(),
                    expected,
                    got: args.len(),
                });
            }
        }
        actions.push(AgentAction { kind, args, raw });
    }
    if actions.is_empty() {
        return Err(ActionParseError::NoAction);
    }
    Ok(actions)
}

/// The thought part of a step reply, without its `Thought i:` prefix.
pub fn parse_thought(text: &str) -> String {
    let head = match action_marker(text) {
        Some((start, _)) => &text[..start],
        None => text,
    };
    let head = head.trim();
    let head = match head.strip_prefix("Thought") {
        Some(rest) => {
            let rest = rest.trim_start_matches(|c: char| c.is_ascii_digit() || c == ' ');
            rest.strip_prefix(':').unwrap_or(rest)
        }
        None => head,
    };
    head.trim().to_string()
}

fn quoted_list(ids: &[String]) -> String {
    let items: Vec<String> = ids.iter().map(|i| format!("'{i}'")).collect();
    format!("[{}]", items.join(", "))
}

fn error_observation(err: &KgError) -> String {
    match err {
        KgError::UnknownNode(id) => format!("No such node: {id}."),
        KgError::FeatureAbsent { node, key } => {
            format!("Feature absent: node {node} has no feature '{key}'.")
        }
        KgError::NoMatch(q) => format!("No node matches '{q}'."),
        KgError::EmptyGraph => "The graph is empty.".to_string(),
        other => format!("Error: {other}."),
    }
}

/// Runs one non-Finish action against the graph and formats the
/// observation. Finish yields an empty string and touches nothing.
pub fn execute_action(ctx: &Context<'_>, action: &AgentAction) -> String {
    let g = ctx.graph;
    let meter = ctx.gateway.meter();
    let arg = |i: usize| action.args[i].as_str();
    let result = match action.kind {
        ActionKind::RetrieveNode => {
            meter.kg_op(kinds::RETRIEVE_NODE);
            g.retrieve_node(arg(0), ctx.retriever)
                .map(|id| format!("The ID of the node is {id}."))
        }
        ActionKind::NodeFeature => {
            meter.kg_op(kinds::NODE_FEATURE);
            g.node_feature(arg(0), arg(1)).map(|v| format!("{} → {v}", arg(0)))
        }
        ActionKind::NeighborCheck => {
            meter.kg_op(kinds::NEIGHBOR_CHECK);
            g.neighbor_check(arg(0), arg(1))
                .map(|ids| format!("The neighbors are {}.", quoted_list(ids)))
        }
        ActionKind::NodeDegree => {
            meter.kg_op(kinds::NODE_DEGREE);
            g.node_degree(arg(0), arg(1))
                .map(|n| format!("The degree of {} for {} is {n}.", arg(0), arg(1)))
        }
        ActionKind::Finish => return String::new(),
    };
    result.unwrap_or_else(|e| error_observation(&e))
}

pub const MALFORMED_OBSERVATION: &str = "Invalid action format. Use RetrieveNode[keyword], NodeFeature[Node, feature], NeighbourCheck[Node, neighbor_type], NodeDegree[Node, neighbor_type] or Finish[answer].";

const FORMAT_REMINDER: &str = "Format reminder: reply with one line `Thought <i>: ...` followed by one line `Action <i>: ...` using RetrieveNode[keyword], NodeFeature[Node, feature], NeighbourCheck[Node, neighbor_type], NodeDegree[Node, neighbor_type] or Finish[answer].";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScratchpadStep {
    pub index: usize,
    pub thought: String,
    pub actions: Vec<AgentAction>,
    pub observations: Vec<String>,
    /// The reply could not be parsed even after a re-ask.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub malformed: bool,
}

impl ScratchpadStep {
    pub fn finish_answer(&self) -> Option<String> {
        self.actions.iter().find_map(AgentAction::answer)
    }

    pub fn render(&self) -> String {
        let i = self.index;
        let mut out = format!("Thought {i}: {}", self.thought);
        if !self.actions.is_empty() {
            let actions: Vec<&str> = self.actions.iter().map(|a| a.raw.as_str()).collect();
            out.push_str(&format!("\nAction {i}: {}", actions.join(", ")));
        }
        if !self.observations.is_empty() {
            let mut obs = self.observations.join(", ");
            if !obs.ends_with('.') {
                obs.push('.');
            }
            out.push_str(&format!("\nObservation {i}: {obs}"));
        }
        out
    }
}

/// Append-only record of agent steps, indexed from 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scratchpad {
    pub steps: Vec<ScratchpadStep>,
}

impl Scratchpad {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn render(&self) -> String {
        self.steps
            .iter()
            .map(ScratchpadStep::render)
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Keeps only the trailing `budget` characters of the rendering,
    /// cut at a line boundary.
    pub fn render_within(&self, budget: Option<usize>) -> String {
        let full = self.render();
        match budget {
            Some(b) if full.len() > b => {
                let mut cut = full.len() - b;
                while !full.is_char_boundary(cut) {
                    cut += 1;
                }
                match full[cut..].find('\n') {
                    Some(nl) => full[cut + nl + 1..].to_string(),
                    None => full[cut..].to_string(),
                }
            }
            _ => full,
        }
    }

    /// Concatenates `other`'s steps that this pad does not already hold,
    /// re-indexing so indices stay contiguous.
    pub fn merged_with(&self, other: &Scratchpad) -> Scratchpad {
        let mut steps = self.steps.clone();
        for s in &other.steps {
            let dup = self
                .steps
                .iter()
                .any(|x| x.thought == s.thought && x.actions == s.actions && x.observations == s.observations);
            if !dup {
                steps.push(s.clone());
            }
        }
        for (i, s) in steps.iter_mut().enumerate() {
            s.index = i + 1;
        }
        Scratchpad { steps }
    }

    pub fn observations(&self) -> impl Iterator<Item = &str> {
        self.steps
            .iter()
            .flat_map(|s| s.observations.iter().map(String::as_str))
    }

    /// Checks contiguous indices and one observation per executed action.
    pub fn validate(&self) -> Result<(), String> {
        for (i, s) in self.steps.iter().enumerate() {
            if s.index != i + 1 {
                return Err(format!("step {} has index {}", i + 1, s.index));
            }
            let executed = s.actions.iter().filter(|a| !a.is_finish()).count();
            let expected = if s.malformed { 1 } else { executed };
            if s.observations.len() != expected {
                return Err(format!(
                    "step {} has {} observations for {} actions",
                    s.index,
                    s.observations.len(),
                    executed
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Finished,
    StepLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub answer: Option<String>,
    pub termination: Termination,
    pub scratchpad: Scratchpad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub max_actions_per_step: usize,
    pub temperature: f64,
    /// Optional character budget for the rendered scratchpad; off by default.
    pub scratchpad_char_budget: Option<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_actions_per_step: 4,
            temperature: 0.7,
            scratchpad_char_budget: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepResult {
    Continue(Scratchpad),
    Finished(AgentOutcome),
}

fn parse_step(text: &str) -> Option<(String, Vec<AgentAction>)> {
    parse_actions(text).ok().map(|a| (parse_thought(text), a))
}

/// Produces, executes and appends one step.
pub fn run_agent_step(
    state: &Scratchpad,
    q: &Question,
    ctx: &Context<'_>,
    cfg: &AgentConfig,
) -> Result<StepResult, LlmError> {
    let index = state.len() + 1;
    let mut vars = BTreeMap::new();
    vars.insert("graph_definition", ctx.graph.definition());
    vars.insert("question", q.text.clone());
    vars.insert("scratchpad", state.render_within(cfg.scratchpad_char_budget));
    let prompt = ctx.prompts.render(TemplateName::AgentStep, &q.domain, &vars)?;
    let req = CompletionRequest::new(
        prompt,
        Decoding::sampling(cfg.temperature).with_stop(&["\nObservation"]),
        tags::THOUGHT,
    );
    let (raw, parsed) = ctx.gateway.complete_parsed(&req, FORMAT_REMINDER, parse_step)?;

    let mut next = state.clone();
    let Some((thought, actions)) = parsed else {
        next.steps.push(ScratchpadStep {
            index,
            thought: parse_thought(&raw),
            actions: Vec::new(),
            observations: vec![MALFORMED_OBSERVATION.to_string()],
            malformed: true,
        });
        return Ok(StepResult::Continue(next));
    };

    let mut executed = Vec::new();
    let mut observations = Vec::new();
    let mut answer = None;
    for action in actions.into_iter().take(cfg.max_actions_per_step.max(1)) {
        if action.is_finish() {
            answer = action.answer();
            executed.push(action);
            break;
        }
        observations.push(execute_action(ctx, &action));
        executed.push(action);
    }
    next.steps.push(ScratchpadStep {
        index,
        thought,
        actions: executed,
        observations,
        malformed: false,
    });
    Ok(match answer {
        Some(answer) => StepResult::Finished(AgentOutcome {
            answer: Some(answer),
            termination: Termination::Finished,
            scratchpad: next,
        }),
        None => StepResult::Continue(next),
    })
}

/// Runs up to `n` steps, stopping at the first Finish.
pub fn run_agent(q: &Question, ctx: &Context<'_>, n: usize, cfg: &AgentConfig) -> Result<AgentOutcome, LlmError> {
    let mut pad = Scratchpad::default();
    while pad.len() < n {
        match run_agent_step(&pad, q, ctx, cfg)? {
            StepResult::Continue(next) => pad = next,
            StepResult::Finished(outcome) => return Ok(outcome),
        }
    }
    Ok(AgentOutcome {
        answer: None,
        termination: Termination::StepLimit,
        scratchpad: pad,
    })
}
