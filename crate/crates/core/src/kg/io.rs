//! Line-delimited node file: one JSON object per line with exactly the
//! fields `id`, `type`, `features` and `neighbors`.

use std::fs;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{KgError, KnowledgeGraph, NodeRecord, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeLine {
    id: String,
    #[serde(rename = "type")]
    node_type: String,
    features: IndexMap<String, String>,
    neighbors: IndexMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// When set, every edge `h -r-> t` also yields `t -(prefix+r)-> h`.
    pub inverse_prefix: Option<String>,
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<KnowledgeGraph> {
    load_graph_with(path, &LoadOptions::default())
}

pub fn load_graph_with(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<KnowledgeGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| KgError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut graph = parse_graph(&text)?;
    if let Some(prefix) = &opts.inverse_prefix {
        graph.materialize_inverse(prefix);
    }
    Ok(graph)
}

/// Parses node-file text. Blank lines are skipped; line numbers in errors
/// are 1-based.
pub fn parse_graph(text: &str) -> Result<KnowledgeGraph> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: NodeLine = serde_json::from_str(line).map_err(|e| KgError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(NodeRecord {
            id: parsed.id,
            node_type: parsed.node_type,
            features: parsed.features,
            out_edges: parsed.neighbors,
        });
    }
    KnowledgeGraph::from_nodes(records)
}

pub fn write_graph(graph: &KnowledgeGraph, mut out: impl Write) -> std::io::Result<()> {
    for rec in graph.nodes() {
        let line = NodeLine {
            id: rec.id.clone(),
            node_type: rec.node_type.clone(),
            features: rec.features.clone(),
            neighbors: rec.out_edges.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_graph(graph: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e: std::io::Error| KgError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = std::io::BufWriter::new(file);
    write_graph(graph, &mut out).map_err(io_err)?;
    out.flush().map_err(io_err)
}
