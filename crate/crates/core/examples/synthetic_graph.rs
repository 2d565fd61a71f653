//! Generates a seeded graph with questions and shows the graph primitives.
//!
//! cargo run --example synthetic_graph

use kgthought::eval::synthetic_questions;
use kgthought::kg::{generate_synthetic_graph, LexicalRetriever, SyntheticSpec};

fn main() -> anyhow::Result<()> {
    let graph = generate_synthetic_graph(
        42,
        &SyntheticSpec {
            nodes: 12,
            ..SyntheticSpec::default()
        },
    )?;
    let stats = graph.stats();
    println!(
        "{} nodes, {} edges, relations {:?}",
        stats.node_count, stats.edge_count, stats.relation_types
    );
    println!("{}\n", graph.definition());

    let id = graph.retrieve_node("gene 3", &LexicalRetriever)?;
    println!("RetrieveNode[gene 3] -> {id}");
    println!("NodeFeature[{id}, code] -> {}", graph.node_feature(id, "code")?);
    for r in &stats.relation_types {
        println!(
            "NodeDegree[{id}, {r}] -> {}, neighbours {:?}",
            graph.node_degree(id, r)?,
            graph.neighbor_check(id, r).unwrap_or(&[])
        );
    }

    println!();
    for q in synthetic_questions(&graph, 4, 42) {
        println!("[{}] {} -> {}", q.difficulty.as_str(), q.text, q.gold_answer);
    }
    Ok(())
}
