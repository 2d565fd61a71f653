//! Seeded desk-scale graph generator.

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{KgError, KnowledgeGraph, NodeRecord, Result, NAME_FEATURE};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Assigned round-robin over node indices.
    pub node_types: Vec<String>,
    pub relations: Vec<String>,
    pub nodes: usize,
    /// Out-edges drawn per node, as distinct `(relation, target)` pairs
    /// without self-loops. Ignored when `relations` is empty.
    pub edges_per_node: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            node_types: vec!["Gene".into(), "Anatomy".into(), "Disease".into()],
            relations: vec!["expressed-in".into(), "associated-with".into()],
            nodes: 30,
            edges_per_node: 2,
        }
    }
}

/// Node `i` gets id `N{i}` and name `"{type} {i}"`. Same seed, same graph.
pub fn generate_synthetic_graph(seed: u64, spec: &SyntheticSpec) -> Result<KnowledgeGraph> {
    if spec.nodes == 0 || spec.node_types.is_empty() {
        return Err(KgError::InvalidSpec(
            "node count and node type list must be non-empty".into(),
        ));
    }
    let per_node = if spec.relations.is_empty() {
        0
    } else {
        spec.edges_per_node
    };
    let capacity = spec.relations.len() * (spec.nodes - 1);
    if per_node > capacity {
        return Err(KgError::InvalidSpec(format!(
            "{per_node} edges per node requested but only {capacity} distinct (relation, target) pairs exist"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(spec.nodes);
    for i in 0..spec.nodes {
        let ty = &spec.node_types[i % spec.node_types.len()];
        let mut features = IndexMap::new();
        features.insert(NAME_FEATURE.to_string(), format!("{} {}", ty.to_lowercase(), i));
        features.insert("code".to_string(), format!("{:04}", rng.gen_range(0..10_000)));

        let mut pairs: Vec<(usize, usize)> = (0..spec.relations.len())
            .flat_map(|r| (0..spec.nodes).filter(move |&t| t != i).map(move |t| (r, t)))
            .collect();
        let (chosen, _) = pairs.partial_shuffle(&mut rng, per_node);
        let mut chosen = chosen.to_vec();
        chosen.sort_unstable();

        let mut out_edges: IndexMap<String, Vec<String>> = IndexMap::new();
        for (r, t) in chosen {
            out_edges
                .entry(spec.relations[r].clone())
                .or_default()
                .push(format!("N{t}"));
        }
        records.push(NodeRecord {
            id: format!("N{i}"),
            node_type: ty.clone(),
            features,
            out_edges,
        });
    }
    KnowledgeGraph::from_nodes(records)
}
