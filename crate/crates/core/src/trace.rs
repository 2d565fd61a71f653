//! Self-contained per-question run records and their validators.

use serde::{Deserialize, Serialize};

use crate::agent::Termination;
use crate::cost::{check, BoundCheck, CostBound, CostCounters};
use crate::eval::{ErrorClass, EvalResult, Question};
use crate::search::{ReasoningGraph, SearchConfig, Strategy};

pub const TRACE_SCHEMA: &str = "kgthought-trace/1";
pub const RESULTS_SCHEMA: &str = "kgthought-results/1";
pub const REPORT_SCHEMA: &str = "kgthought-report/1";
pub const SWEEP_SCHEMA: &str = "kgthought-sweep/1";

/// The run settings a trace was produced under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub search: SearchConfig,
    /// Step budget for a chain.
    pub n: usize,
    pub seed: u64,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub judge: String,
}

impl ConfigEcho {
    /// Report row label, e.g. `tot-agent-select`.
    pub fn method(&self) -> String {
        method_label(&self.search)
    }
}

pub fn method_label(cfg: &SearchConfig) -> String {
    match cfg.strategy {
        Strategy::Cot => format!("{}-{}", cfg.strategy, cfg.interaction),
        _ => format!("{}-{}-{}", cfg.strategy, cfg.interaction, cfg.evaluator),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Judgement {
    pub judge_correct: Option<bool>,
    pub error_class: Option<ErrorClass>,
    /// Correctness-judge completions spent on this question.
    pub judge_calls: u64,
    /// Error-labelling completions spent on this question.
    pub classify_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub schema: String,
    /// Position of the question in its file.
    pub index: usize,
    pub question: Question,
    pub config: ConfigEcho,
    pub graph: ReasoningGraph,
    pub answer: Option<String>,
    pub termination: Termination,
    pub counters: CostCounters,
    pub bound: CostBound,
    pub bound_check: BoundCheck,
    pub judgement: Judgement,
    /// Set when the question's pipeline failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Unix milliseconds; omitted for deterministic backends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_unix_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_unix_ms: Option<u64>,
}

impl TraceRecord {
    /// Triples and observations gathered anywhere in the search, deduplicated
    /// in first-seen order.
    pub fn evidence(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |s: String| {
            if !out.contains(&s) {
                out.push(s);
            }
        };
        for s in &self.graph.states {
            for t in &s.evidence.exploration.found_triples {
                push(t.to_string());
            }
            if let Some(pad) = &s.evidence.scratchpad {
                for o in pad.observations() {
                    push(o.to_string());
                }
            }
        }
        out
    }

    /// Distinct triples found across all states.
    pub fn triples_found(&self) -> usize {
        let mut keys = std::collections::HashSet::new();
        for s in &self.graph.states {
            for t in &s.evidence.exploration.found_triples {
                keys.insert((t.head_id.clone(), t.relation.clone(), t.tail_id.clone()));
            }
        }
        keys.len()
    }

    /// Recomputes the per-question result from the stored answer and
    /// judgement.
    pub fn eval_result(&self) -> EvalResult {
        let mut r = EvalResult::score(&self.question, self.answer.as_deref());
        r.judge_correct = self.judgement.judge_correct;
        r.error_class = self.judgement.error_class;
        r
    }

    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trace serializes");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    /// Runs every invariant check; returns the violations found.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.schema != TRACE_SCHEMA {
            v.push(format!("unknown schema `{}`", self.schema));
        }
        let search = &self.config.search;
        if let Err(e) = search.validate() {
            v.push(format!("config: {e}"));
        }
        if let Err(e) = self.graph.validate(search.strategy, search.t) {
            v.push(format!("reasoning graph: {e}"));
        }
        for s in &self.graph.states {
            if let Some(pad) = &s.evidence.scratchpad {
                if let Err(e) = pad.validate() {
                    v.push(format!("state {} scratchpad: {e}", s.id));
                }
            }
            if let Err(e) = s.evidence.exploration.validate() {
                v.push(format!("state {} exploration: {e}", s.id));
            }
        }
        if self.error.is_none() {
            if self.answer != self.graph.answer {
                v.push("answer differs from the reasoning graph's answer".into());
            }
            if (self.termination == Termination::Finished) != self.answer.is_some() {
                v.push("termination disagrees with the presence of an answer".into());
            }
        }
        if check(&self.counters, &self.bound) != self.bound_check {
            v.push("stored bound check does not match the counters".into());
        }
        if !self.bound_check.ok {
            for violation in &self.bound_check.violations {
                v.push(format!("cost bound: {violation}"));
            }
        }
        if let Err(e) = self.eval_result().validate() {
            v.push(e);
        }
        if self.judgement.error_class == Some(ErrorClass::ReachedLimit) && self.termination != Termination::StepLimit {
            v.push("reached_limit label on a run that finished".into());
        }
        v
    }
}
