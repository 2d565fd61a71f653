use std::collections::HashMap;

use super::NodeRecord;
use crate::text::tokenize;

/// Scores how well a node matches a free-text query. Zero means no match.
pub trait RetrieverPolicy: Send + Sync {
    fn score(&self, query: &str, node: &NodeRecord) -> f64;
}

/// Case-folded token-overlap F1 between the query and the node name.
///
/// An exact (case-insensitive) match of the whole name, or of the node id,
/// scores 2.0 so it dominates any partial overlap.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalRetriever;

impl RetrieverPolicy for LexicalRetriever {
    fn score(&self, query: &str, node: &NodeRecord) -> f64 {
        let q = query.trim();
        if q.eq_ignore_ascii_case(node.name().trim()) || q == node.id {
            return 2.0;
        }
        token_f1(&tokenize(q), &tokenize(node.name()))
    }
}

fn token_f1(query: &[String], name: &[String]) -> f64 {
    if query.is_empty() || name.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in name {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in query {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    2.0 * overlap as f64 / (query.len() + name.len()) as f64
}
