//! LLM-guided breadth-first graph exploration.
//!
//! Starting from anchor entities, each depth expands every unvisited seen
//! entity: the model prunes its relations, then the tail entities of each
//! kept relation, and the surviving edges are harvested as triples. After
//! each depth the model is asked whether the evidence suffices.

use std::collections::{BTreeMap, HashSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::context::Context;
use crate::cost::{kinds, tags};
use crate::eval::Question;
use crate::kg::{Triple, NAME_FEATURE};
use crate::llm::parse::{parse_bracketed_answer, parse_yes_no, split_top_level};
use crate::llm::{CompletionRequest, Decoding, LlmError, TemplateName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeenEntity {
    pub visited: bool,
    pub depth_discovered: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub entity: String,
    pub key: String,
    pub value: String,
}

/// Evidence gathered by exploration; grows monotonically.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationState {
    pub seen_entities: IndexMap<String, SeenEntity>,
    pub found_triples: Vec<Triple>,
    pub relevant_attributes: Vec<Attribute>,
}

impl ExplorationState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `ids` as discovered at `depth`; already-seen entities keep
    /// their flags and the shallower depth.
    pub fn add_seen(&mut self, ids: impl IntoIterator<Item = impl Into<String>>, depth: usize) {
        for id in ids {
            let entry = self.seen_entities.entry(id.into()).or_insert(SeenEntity {
                visited: false,
                depth_discovered: depth,
            });
            entry.depth_discovered = entry.depth_discovered.min(depth);
        }
    }

    pub fn has_triple(&self, t: &Triple) -> bool {
        self.found_triples.iter().any(|x| x.key() == t.key())
    }

    pub fn push_triple(&mut self, t: Triple) -> bool {
        if self.has_triple(&t) {
            return false;
        }
        self.found_triples.push(t);
        true
    }

    pub fn push_attribute(&mut self, a: Attribute) {
        if !self.relevant_attributes.contains(&a) {
            self.relevant_attributes.push(a);
        }
    }

    /// Deduplicated union; `self`'s order first.
    pub fn union(&self, other: &ExplorationState) -> ExplorationState {
        let mut out = self.clone();
        for (id, s) in &other.seen_entities {
            let entry = out.seen_entities.entry(id.clone()).or_insert(*s);
            entry.visited |= s.visited;
            entry.depth_discovered = entry.depth_discovered.min(s.depth_discovered);
        }
        for t in &other.found_triples {
            out.push_triple(t.clone());
        }
        for a in &other.relevant_attributes {
            out.push_attribute(a.clone());
        }
        out
    }

    /// One `head --> relation --> tail` line per triple.
    pub fn render_triples(&self) -> String {
        self.found_triples
            .iter()
            .map(Triple::to_string)
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn render_attributes(&self, ctx: &Context<'_>) -> String {
        self.relevant_attributes
            .iter()
            .map(|a| {
                let name = ctx.graph.name_of(&a.entity).unwrap_or(&a.entity);
                format!("{name}: {} = {}", a.key, a.value)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Checks the state invariants against itself.
    pub fn validate(&self) -> Result<(), String> {
        let mut keys = HashSet::new();
        for t in &self.found_triples {
            if !keys.insert(t.key()) {
                return Err(format!("duplicate triple {t}"));
            }
            for id in [&t.head_id, &t.tail_id] {
                if !self.seen_entities.contains_key(id) {
                    return Err(format!("triple entity {id} was never seen"));
                }
            }
            let (h, tl) = (&self.seen_entities[&t.head_id], &self.seen_entities[&t.tail_id]);
            if tl.depth_discovered > h.depth_discovered + 1 {
                return Err(format!("tail {} discovered deeper than its head allows", t.tail_id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub search_depth: usize,
    pub max_relations_per_entity: usize,
    pub max_neighbors_per_relation: usize,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self {
            search_depth: 3,
            max_relations_per_entity: 3,
            max_neighbors_per_relation: 5,
        }
    }
}

impl ExploreConfig {
    /// No pruning caps; the model alone decides.
    pub fn uncapped(search_depth: usize) -> Self {
        Self {
            search_depth,
            max_relations_per_entity: usize::MAX,
            max_neighbors_per_relation: usize::MAX,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.search_depth == 0 || self.max_relations_per_entity == 0 || self.max_neighbors_per_relation == 0 {
            return Err("search depth and pruning caps must be at least 1".into());
        }
        Ok(())
    }
}

fn control(
    ctx: &Context<'_>,
    name: TemplateName,
    domain: &str,
    vars: BTreeMap<&str, String>,
    tag: &str,
) -> Result<String, LlmError> {
    let prompt = ctx.prompts.render(name, domain, &vars)?;
    ctx.gateway
        .complete(&CompletionRequest::new(prompt, Decoding::control(), tag))
}

fn bracketed_items(reply: &str) -> Option<Vec<String>> {
    parse_bracketed_answer(reply).ok().map(|s| split_top_level(&s))
}

fn is_none_marker(items: &[String]) -> bool {
    items.len() == 1 && matches!(items[0].to_ascii_lowercase().as_str(), "none" | "no" | "")
}

/// Surface forms of the entities mentioned in `text`. Malformed replies
/// give an empty list.
pub fn extract_entities(ctx: &Context<'_>, text: &str, domain: &str) -> Result<Vec<String>, LlmError> {
    let vars = BTreeMap::from([("text", text.to_string())]);
    let reply = control(ctx, TemplateName::EntityExtraction, domain, vars, tags::EXTRACT)?;
    let items = bracketed_items(&reply).unwrap_or_default();
    Ok(if is_none_marker(&items) { Vec::new() } else { items })
}

/// Resolves surface forms to node ids with the retriever, dropping misses
/// and duplicates.
pub fn resolve_entities(ctx: &Context<'_>, names: &[String]) -> Vec<String> {
    let mut ids: Vec<String> = Vec::new();
    for name in names {
        ctx.gateway.meter().kg_op(kinds::RETRIEVE_NODE);
        if let Ok(id) = ctx.graph.retrieve_node(name, ctx.retriever) {
            if !ids.iter().any(|x| x == id) {
                ids.push(id.to_string());
            }
        }
    }
    ids
}

/// Keeps the relations the model selects, in input order, capped at
/// `cap`. Falls back to the first `cap` relations when nothing usable
/// comes back.
pub fn prune_relations(
    ctx: &Context<'_>,
    q: &Question,
    entity: &str,
    relations: &[String],
    cap: usize,
) -> Result<Vec<String>, LlmError> {
    let vars = BTreeMap::from([
        ("question", q.text.clone()),
        ("entity", ctx.graph.name_of(entity).unwrap_or(entity).to_string()),
        ("relations", relations.join(", ")),
    ]);
    let reply = control(
        ctx,
        TemplateName::PruneRelations,
        &q.domain,
        vars,
        tags::PRUNE_RELATIONS,
    )?;
    let picked = bracketed_items(&reply).unwrap_or_default();
    let kept: Vec<String> = relations
        .iter()
        .filter(|r| picked.iter().any(|p| p.eq_ignore_ascii_case(r)))
        .take(cap)
        .cloned()
        .collect();
    Ok(if kept.is_empty() {
        relations.iter().take(cap).cloned().collect()
    } else {
        kept
    })
}

/// Keeps the tails the model names, in input order, capped at `cap`.
/// Names resolve by exact match against the candidates only.
pub fn prune_entities(
    ctx: &Context<'_>,
    q: &Question,
    head: &str,
    relation: &str,
    tails: &[String],
    cap: usize,
) -> Result<Vec<String>, LlmError> {
    let names: Vec<&str> = tails.iter().map(|id| ctx.graph.name_of(id).unwrap_or(id)).collect();
    let vars = BTreeMap::from([
        ("question", q.text.clone()),
        ("head_entity", ctx.graph.name_of(head).unwrap_or(head).to_string()),
        ("relation", relation.to_string()),
        ("tail_entities", names.join(", ")),
    ]);
    let reply = control(ctx, TemplateName::PruneEntities, &q.domain, vars, tags::PRUNE_ENTITIES)?;
    let picked = bracketed_items(&reply).unwrap_or_default();
    let kept: Vec<String> = tails
        .iter()
        .zip(&names)
        .filter(|(id, name)| picked.iter().any(|p| p == *name || p == *id))
        .map(|(id, _)| id.clone())
        .take(cap)
        .collect();
    Ok(if kept.is_empty() {
        tails.iter().take(cap).cloned().collect()
    } else {
        kept
    })
}

/// Feature pairs the model deems relevant. No call for an empty map;
/// malformed replies and `{{None}}` give nothing.
pub fn search_attributes(
    ctx: &Context<'_>,
    q: &Question,
    entity: &str,
    features: &IndexMap<String, String>,
) -> Result<Vec<(String, String)>, LlmError> {
    if features.is_empty() {
        return Ok(Vec::new());
    }
    let listing: Vec<String> = features.iter().map(|(k, v)| format!("{k}: {v}")).collect();
    let vars = BTreeMap::from([
        ("question", q.text.clone()),
        ("entity", ctx.graph.name_of(entity).unwrap_or(entity).to_string()),
        ("attributes", listing.join(", ")),
    ]);
    let reply = control(ctx, TemplateName::SearchAttributes, &q.domain, vars, tags::ATTRIBUTES)?;
    let picked = bracketed_items(&reply).unwrap_or_default();
    if is_none_marker(&picked) {
        return Ok(Vec::new());
    }
    Ok(features
        .iter()
        .filter(|(k, _)| {
            picked.iter().any(|p| {
                let key = p.split(':').next().unwrap_or(p).trim();
                key.eq_ignore_ascii_case(k)
            })
        })
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect())
}

/// True iff the model's leading bracketed verdict is "Yes".
pub fn end_check(ctx: &Context<'_>, q: &Question, state: &ExplorationState, thoughts: &str) -> Result<bool, LlmError> {
    let vars = BTreeMap::from([
        ("question", q.text.clone()),
        ("thoughts", thoughts.to_string()),
        ("triples", state.render_triples()),
        ("attributes", state.render_attributes(ctx)),
    ]);
    let reply = control(ctx, TemplateName::SearchEnd, &q.domain, vars, tags::END_CHECK)?;
    Ok(parse_yes_no(&reply) == Some(true))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreOutcome {
    pub state: ExplorationState,
    /// The stopping check answered "Yes".
    pub sufficient: bool,
}

/// Breadth-first exploration from `anchors`.
///
/// At every depth the frontier is each seen entity not yet visited. Each is
/// marked visited, its non-name features offered to attribute search, its
/// relations pruned and the tails of every kept relation pruned; kept edges
/// become triples and their tails join the seen set one level deeper. The
/// stopping check runs after each depth that expanded something.
pub fn explore(
    ctx: &Context<'_>,
    q: &Question,
    anchors: &[String],
    state: ExplorationState,
    cfg: &ExploreConfig,
    thoughts: &str,
) -> Result<ExploreOutcome, LlmError> {
    let mut state = state;
    let meter = ctx.gateway.meter();
    state.add_seen(anchors.iter().filter(|a| ctx.graph.contains(a)).cloned(), 0);

    for _ in 0..cfg.search_depth {
        let frontier: Vec<String> = state
            .seen_entities
            .iter()
            .filter(|(_, s)| !s.visited)
            .map(|(id, _)| id.clone())
            .collect();
        if frontier.is_empty() {
            break;
        }
        let mut discovered: Vec<(String, usize)> = Vec::new();
        for entity in &frontier {
            let seen = state.seen_entities.get_mut(entity).expect("frontier entity is seen");
            seen.visited = true;
            let next_depth = seen.depth_discovered + 1;

            meter.kg_op(kinds::EXPLORE_NODE);
            let node = ctx.graph.node(entity).expect("seen entities exist in the graph");
            let features: IndexMap<String, String> = node
                .features
                .iter()
                .filter(|(k, _)| k.as_str() != NAME_FEATURE)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            for (key, value) in search_attributes(ctx, q, entity, &features)? {
                state.push_attribute(Attribute {
                    entity: entity.clone(),
                    key,
                    value,
                });
            }

            let relations: Vec<String> = node
                .out_edges
                .iter()
                .filter(|(_, ts)| !ts.is_empty())
                .map(|(r, _)| r.clone())
                .collect();
            if relations.is_empty() {
                continue;
            }
            let kept = prune_relations(ctx, q, entity, &relations, cfg.max_relations_per_entity)?;
            for relation in kept {
                meter.kg_op(kinds::EXPLORE_NEIGHBORS);
                let tails = ctx
                    .graph
                    .neighbor_check(entity, &relation)
                    .map(<[String]>::to_vec)
                    .unwrap_or_default();
                if tails.is_empty() {
                    continue;
                }
                let kept_tails = prune_entities(ctx, q, entity, &relation, &tails, cfg.max_neighbors_per_relation)?;
                for tail in kept_tails {
                    let triple = ctx
                        .graph
                        .triple(entity, &relation, &tail)
                        .expect("pruned tail is a neighbor");
                    state.push_triple(triple);
                    discovered.push((tail, next_depth));
                }
            }
        }
        for (tail, depth) in discovered {
            state.add_seen([tail], depth);
        }
        if end_check(ctx, q, &state, thoughts)? {
            return Ok(ExploreOutcome {
                state,
                sufficient: true,
            });
        }
    }
    Ok(ExploreOutcome {
        state,
        sufficient: false,
    })
}
