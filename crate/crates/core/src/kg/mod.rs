//! In-memory heterogeneous directed knowledge graph.
//!
//! Nodes carry a type, a string feature map and per-relation ordered
//! out-edge lists. The graph is immutable after loading; the four agent
//! primitives (`retrieve_node`, `node_feature`, `neighbor_check`,
//! `node_degree`) are read-only lookups.

mod io;
mod retriever;
mod synthetic;

use std::collections::BTreeSet;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_graph, load_graph_with, parse_graph, save_graph, write_graph, LoadOptions};
pub use retriever::{LexicalRetriever, RetrieverPolicy};
pub use synthetic::{generate_synthetic_graph, SyntheticSpec};

/// Feature key holding a node's display name.
pub const NAME_FEATURE: &str = "name";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KgError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("node `{node}` lists neighbor `{target}` under `{relation}` but no such node exists")]
    DanglingEdge {
        node: String,
        relation: String,
        target: String,
    },
    #[error("no such node `{0}`")]
    UnknownNode(String),
    #[error("node `{node}` has no feature `{key}`")]
    FeatureAbsent { node: String, key: String },
    #[error("graph is empty")]
    EmptyGraph,
    #[error("no node matches `{0}`")]
    NoMatch(String),
    #[error("`{head}` has no `{relation}` edge to `{tail}`")]
    NoSuchEdge {
        head: String,
        relation: String,
        tail: String,
    },
    #[error("invalid synthetic graph spec: {0}")]
    InvalidSpec(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, KgError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub node_type: String,
    pub features: IndexMap<String, String>,
    pub out_edges: IndexMap<String, Vec<String>>,
}

impl NodeRecord {
    /// The node's `name` feature, or its id when it has none.
    pub fn name(&self) -> &str {
        self.features.get(NAME_FEATURE).map(String::as_str).unwrap_or(&self.id)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub relation_types: BTreeSet<String>,
}

/// A `(head, relation, tail)` fact with both display names and ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head_name: String,
    pub relation: String,
    pub tail_name: String,
    pub head_id: String,
    pub tail_id: String,
}

impl Triple {
    pub fn key(&self) -> (&str, &str, &str) {
        (&self.head_id, &self.relation, &self.tail_id)
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} --> {} --> {}", self.head_name, self.relation, self.tail_name)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    nodes: IndexMap<String, NodeRecord>,
    stats: GraphStats,
}

impl KnowledgeGraph {
    /// Builds a graph from nodes in load order, enforcing referential
    /// integrity and deduplicating per-relation neighbor lists.
    pub fn from_nodes(records: impl IntoIterator<Item = NodeRecord>) -> Result<Self> {
        let mut nodes: IndexMap<String, NodeRecord> = IndexMap::new();
        for mut rec in records {
            if nodes.contains_key(&rec.id) {
                return Err(KgError::DuplicateNode(rec.id));
            }
            for targets in rec.out_edges.values_mut() {
                let mut seen = BTreeSet::new();
                targets.retain(|t| seen.insert(t.clone()));
            }
            nodes.insert(rec.id.clone(), rec);
        }
        for rec in nodes.values() {
            for (relation, targets) in &rec.out_edges {
                if let Some(target) = targets.iter().find(|t| !nodes.contains_key(*t)) {
                    return Err(KgError::DanglingEdge {
                        node: rec.id.clone(),
                        relation: relation.clone(),
                        target: target.clone(),
                    });
                }
            }
        }
        let mut graph = Self {
            nodes,
            stats: GraphStats::default(),
        };
        graph.recompute_stats();
        Ok(graph)
    }

    fn recompute_stats(&mut self) {
        let mut stats = GraphStats {
            node_count: self.nodes.len(),
            ..GraphStats::default()
        };
        for rec in self.nodes.values() {
            for (relation, targets) in &rec.out_edges {
                stats.edge_count += targets.len();
                stats.relation_types.insert(relation.clone());
            }
        }
        self.stats = stats;
    }

    /// Adds `prefix + relation` reverse edges for every stored edge.
    pub(crate) fn materialize_inverse(&mut self, prefix: &str) {
        let mut reverse: Vec<(String, String, String)> = Vec::new();
        for rec in self.nodes.values() {
            for (relation, targets) in &rec.out_edges {
                for t in targets {
                    reverse.push((t.clone(), format!("{prefix}{relation}"), rec.id.clone()));
                }
            }
        }
        for (tail, relation, head) in reverse {
            let rec = self.nodes.get_mut(&tail).expect("edge targets resolve");
            let list = rec.out_edges.entry(relation).or_default();
            if !list.contains(&head) {
                list.push(head);
            }
        }
        self.recompute_stats();
    }

    pub fn stats(&self) -> &GraphStats {
        &self.stats
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in load order.
    pub fn nodes(&self) -> impl Iterator<Item = &NodeRecord> {
        self.nodes.values()
    }

    pub fn node(&self, id: &str) -> Result<&NodeRecord> {
        self.nodes.get(id).ok_or_else(|| KgError::UnknownNode(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    /// Position of `id` in load order.
    pub fn load_index(&self, id: &str) -> Option<usize> {
        self.nodes.get_index_of(id)
    }

    pub fn name_of(&self, id: &str) -> Result<&str> {
        self.node(id).map(NodeRecord::name)
    }

    /// Highest-scoring node for `query` under `policy`; ties go to the node
    /// loaded first.
    pub fn retrieve_node(&self, query: &str, policy: &dyn RetrieverPolicy) -> Result<&str> {
        if self.nodes.is_empty() {
            return Err(KgError::EmptyGraph);
        }
        let mut best: Option<(&str, f64)> = None;
        for rec in self.nodes.values() {
            let score = policy.score(query, rec);
            if score > 0.0 && best.is_none_or(|(_, s)| score > s) {
                best = Some((&rec.id, score));
            }
        }
        best.map(|(id, _)| id)
            .ok_or_else(|| KgError::NoMatch(query.to_string()))
    }

    pub fn node_feature(&self, id: &str, key: &str) -> Result<&str> {
        let rec = self.node(id)?;
        rec.features
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| KgError::FeatureAbsent {
                node: id.to_string(),
                key: key.to_string(),
            })
    }

    pub fn neighbor_check(&self, id: &str, relation: &str) -> Result<&[String]> {
        let rec = self.node(id)?;
        Ok(rec.out_edges.get(relation).map(Vec::as_slice).unwrap_or(&[]))
    }

    pub fn node_degree(&self, id: &str, relation: &str) -> Result<usize> {
        self.neighbor_check(id, relation).map(<[String]>::len)
    }

    /// Builds a resolved triple, failing unless the edge exists.
    pub fn triple(&self, head: &str, relation: &str, tail: &str) -> Result<Triple> {
        let h = self.node(head)?;
        let t = self.node(tail)?;
        if !self.neighbor_check(head, relation)?.iter().any(|x| x == tail) {
            return Err(KgError::NoSuchEdge {
                head: head.to_string(),
                relation: relation.to_string(),
                tail: tail.to_string(),
            });
        }
        Ok(Triple {
            head_name: h.name().to_string(),
            relation: relation.to_string(),
            tail_name: t.name().to_string(),
            head_id: h.id.clone(),
            tail_id: t.id.clone(),
        })
    }

    /// Every edge in the graph as a triple, in load order.
    pub fn triples(&self) -> Vec<Triple> {
        let mut out = Vec::with_capacity(self.stats.edge_count);
        for rec in self.nodes.values() {
            for (relation, targets) in &rec.out_edges {
                for t in targets {
                    let tail = &self.nodes[t];
                    out.push(Triple {
                        head_name: rec.name().to_string(),
                        relation: relation.clone(),
                        tail_name: tail.name().to_string(),
                        head_id: rec.id.clone(),
                        tail_id: tail.id.clone(),
                    });
                }
            }
        }
        out
    }

    /// Short textual schema description used to fill prompt slots.
    pub fn definition(&self) -> String {
        let types: BTreeSet<&str> = self.nodes.values().map(|n| n.node_type.as_str()).collect();
        let types: Vec<&str> = types.into_iter().collect();
        let relations: Vec<&str> = self.stats.relation_types.iter().map(String::as_str).collect();
        format!(
            "Node types: {}. Relation types: {}.",
            types.join(", "),
            relations.join(", ")
        )
    }
}
