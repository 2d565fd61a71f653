use crate::kg::{KnowledgeGraph, LexicalRetriever, RetrieverPolicy};
use crate::llm::{Gateway, PromptRegistry};

/// Everything a pipeline step needs: the graph, a metered gateway, the
/// prompt registry and the node retriever.
#[derive(Clone, Copy)]
pub struct Context<'a> {
    pub graph: &'a KnowledgeGraph,
    pub gateway: Gateway<'a>,
    pub prompts: &'a PromptRegistry,
    pub retriever: &'a dyn RetrieverPolicy,
}

impl<'a> Context<'a> {
    pub fn new(graph: &'a KnowledgeGraph, gateway: Gateway<'a>, prompts: &'a PromptRegistry) -> Self {
        Self {
            graph,
            gateway,
            prompts,
            retriever: &LexicalRetriever,
        }
    }

    pub fn with_retriever(mut self, retriever: &'a dyn RetrieverPolicy) -> Self {
        self.retriever = retriever;
        self
    }
}
