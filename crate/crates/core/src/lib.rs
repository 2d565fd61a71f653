//! Question answering over knowledge graphs with chain, tree and graph
//! structured reasoning.
//!
//! The building blocks are an in-memory [`kg::KnowledgeGraph`], a metered
//! completion [`llm::Gateway`], two ways for a model to touch the graph
//! ([`agent`] actions and automatic [`explore`]ation) and the [`search`]
//! strategies that organize generated thoughts. [`eval`] scores answers,
//! [`cost`] meters and bounds every run, and [`runner`] ties it together
//! into batch experiments with replayable traces.

pub mod agent;
pub mod context;
pub mod cost;
pub mod eval;
pub mod explore;
pub mod kg;
pub mod llm;
pub mod runner;
pub mod search;
pub mod text;
pub mod trace;

pub use context::Context;
