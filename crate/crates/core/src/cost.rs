//! Metering of LLM calls and graph operations, and closed-form call bounds
//! for each (strategy, interaction) pair.
//!
//! Only thought generations count against the generation bound and only
//! merge completions against the merge bound. Evaluator votes, pruning,
//! extraction, re-asks and judge calls are metered under their own tags and
//! reported, but excluded from both.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::search::{Interaction, SearchConfig, Strategy};

/// Completion tags.
pub mod tags {
    pub const THOUGHT: &str = "thought";
    pub const REASK: &str = "reask";
    pub const TRANSPORT_RETRY: &str = "transport_retry";
    pub const EXTRACT: &str = "entity_extraction";
    pub const PRUNE_RELATIONS: &str = "prune_relations";
    pub const PRUNE_ENTITIES: &str = "prune_entities";
    pub const ATTRIBUTES: &str = "search_attributes";
    pub const END_CHECK: &str = "search_end";
    pub const ANSWER: &str = "answer";
    pub const SELECT: &str = "selection_vote";
    pub const SCORE: &str = "score_vote";
    pub const MERGE: &str = "got_merge";
    pub const JUDGE: &str = "judge_correctness";
    pub const JUDGE_ERROR: &str = "judge_error_class";
}

/// Graph operation kinds.
pub mod kinds {
    pub const RETRIEVE_NODE: &str = "retrieve_node";
    pub const NODE_FEATURE: &str = "node_feature";
    pub const NEIGHBOR_CHECK: &str = "neighbor_check";
    pub const NODE_DEGREE: &str = "node_degree";
    /// One node fetch (name, attributes, relation list) during exploration.
    pub const EXPLORE_NODE: &str = "explore_node";
    /// One neighbor lookup for a selected relation during exploration.
    pub const EXPLORE_NEIGHBORS: &str = "explore_neighbors";
    /// One invocation of the exploration procedure.
    pub const EXPLORE_SEARCH: &str = "explore_search";
}

/// Snapshot of a run's meters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounters {
    pub llm_calls_by_tag: BTreeMap<String, u64>,
    pub kg_ops_by_kind: BTreeMap<String, u64>,
    /// Zero under the replay backend so traces stay byte-stable.
    pub wall_time_ms: u64,
}

impl CostCounters {
    pub fn llm_calls(&self, tag: &str) -> u64 {
        self.llm_calls_by_tag.get(tag).copied().unwrap_or(0)
    }

    pub fn total_llm_calls(&self) -> u64 {
        self.llm_calls_by_tag.values().sum()
    }

    pub fn kg_ops(&self, kind: &str) -> u64 {
        self.kg_ops_by_kind.get(kind).copied().unwrap_or(0)
    }

    /// All graph operations except the search-invocation counter.
    pub fn total_kg_ops(&self) -> u64 {
        self.kg_ops_by_kind
            .iter()
            .filter(|(k, _)| k.as_str() != kinds::EXPLORE_SEARCH)
            .map(|(_, v)| v)
            .sum()
    }

    pub fn generation_calls(&self) -> u64 {
        self.llm_calls(tags::THOUGHT)
    }

    pub fn merge_attempts(&self) -> u64 {
        self.llm_calls(tags::MERGE)
    }

    pub fn explore_searches(&self) -> u64 {
        self.kg_ops(kinds::EXPLORE_SEARCH)
    }

    /// Measured per-search exploration cost: explore node and neighbor
    /// lookups divided by the number of searches.
    pub fn cost_explore(&self) -> Option<f64> {
        let searches = self.explore_searches();
        if searches == 0 {
            return None;
        }
        let ops = self.kg_ops(kinds::EXPLORE_NODE) + self.kg_ops(kinds::EXPLORE_NEIGHBORS);
        Some(ops as f64 / searches as f64)
    }

    pub fn absorb(&mut self, other: &CostCounters) {
        for (k, v) in &other.llm_calls_by_tag {
            *self.llm_calls_by_tag.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &other.kg_ops_by_kind {
            *self.kg_ops_by_kind.entry(k.clone()).or_default() += v;
        }
        self.wall_time_ms += other.wall_time_ms;
    }
}

/// Shared, thread-safe meter for a single run.
#[derive(Debug)]
pub struct Meter {
    counters: Mutex<CostCounters>,
    started: Instant,
    record_time: bool,
}

impl Default for Meter {
    fn default() -> Self {
        Self::new(false)
    }
}

impl Meter {
    pub fn new(record_time: bool) -> Self {
        Self {
            counters: Mutex::new(CostCounters::default()),
            started: Instant::now(),
            record_time,
        }
    }

    pub fn llm_call(&self, tag: &str) {
        let mut c = self.counters.lock().expect("meter poisoned");
        *c.llm_calls_by_tag.entry(tag.to_string()).or_default() += 1;
    }

    pub fn kg_op(&self, kind: &str) {
        self.kg_ops(kind, 1);
    }

    pub fn kg_ops(&self, kind: &str, n: u64) {
        let mut c = self.counters.lock().expect("meter poisoned");
        *c.kg_ops_by_kind.entry(kind.to_string()).or_default() += n;
    }

    pub fn snapshot(&self) -> CostCounters {
        let mut c = self.counters.lock().expect("meter poisoned").clone();
        if self.record_time {
            c.wall_time_ms = self.started.elapsed().as_millis() as u64;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KgBoundUnit {
    /// Raw graph operations.
    Operations,
    /// Invocations of the exploration procedure, each costing
    /// `Cost_Explore(d)` operations.
    ExploreSearches,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundParams {
    pub n: u64,
    pub k: u64,
    pub t: u64,
    pub d_max: u64,
    pub d: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostBound {
    pub strategy: Strategy,
    pub interaction: Interaction,
    pub params: BoundParams,
    pub generation_call_bound: u64,
    pub merge_attempt_bound: u64,
    pub kg_op_bound: u64,
    pub kg_unit: KgBoundUnit,
}

/// `k * (t^D - 1) / (t - 1)`, or `k * D` when `t == 1`.
pub fn tree_generation_calls(k: u64, t: u64, depth: u64) -> u64 {
    if t == 1 {
        k * depth
    } else {
        k * (t.pow(depth as u32) - 1) / (t - 1)
    }
}

/// `sum_{i=1..D} floor(k * t^i / 2)`.
pub fn graph_merge_attempts(k: u64, t: u64, depth: u64) -> u64 {
    (1..=depth).map(|i| k * t.pow(i as u32) / 2).sum()
}

/// Evaluates the closed-form row for `cfg`. `n` is the CoT step budget and
/// `d` the exploration search depth.
pub fn bound_for(cfg: &SearchConfig, n: u64, d: u64) -> CostBound {
    let (k, t, d_max) = (cfg.k as u64, cfg.t as u64, cfg.d_max as u64);
    let (generation, merges) = match cfg.strategy {
        Strategy::Cot => (n, 0),
        Strategy::Tot => (tree_generation_calls(k, t, d_max), 0),
        Strategy::Got => (tree_generation_calls(k, t, d_max), graph_merge_attempts(k, t, d_max)),
    };
    let (kg_op_bound, kg_unit) = match cfg.interaction {
        Interaction::Agent => (
            (generation + merges) * cfg.max_actions_per_step as u64,
            KgBoundUnit::Operations,
        ),
        Interaction::Explore => (generation + merges, KgBoundUnit::ExploreSearches),
    };
    CostBound {
        strategy: cfg.strategy,
        interaction: cfg.interaction,
        params: BoundParams { n, k, t, d_max, d },
        generation_call_bound: generation,
        merge_attempt_bound: merges,
        kg_op_bound,
        kg_unit,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub ok: bool,
    pub violations: Vec<String>,
}

pub fn check(counters: &CostCounters, bound: &CostBound) -> BoundCheck {
    let mut violations = Vec::new();
    let generation = counters.generation_calls();
    if generation > bound.generation_call_bound {
        violations.push(format!(
            "generation calls {generation} exceed bound {}",
            bound.generation_call_bound
        ));
    }
    let merges = counters.merge_attempts();
    if merges > bound.merge_attempt_bound {
        violations.push(format!(
            "merge attempts {merges} exceed bound {}",
            bound.merge_attempt_bound
        ));
    }
    let kg = match bound.kg_unit {
        KgBoundUnit::Operations => counters.total_kg_ops(),
        KgBoundUnit::ExploreSearches => counters.explore_searches(),
    };
    if kg > bound.kg_op_bound {
        violations.push(format!("kg ops {kg} exceed bound {}", bound.kg_op_bound));
    }
    BoundCheck {
        ok: violations.is_empty(),
        violations,
    }
}
