//! Prompt templates and the registry that fills them.
//!
//! Placeholders are written `{name}` and only names declared in a
//! template's placeholder set are substituted, so literal answer markers
//! such as `{{s}}` survive rendering untouched. Few-shot examples are
//! external text assets keyed by (template, domain).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    AgentStep,
    SearchThought,
    SearchEnd,
    EntityExtraction,
    PruneRelations,
    PruneEntities,
    SearchAttributes,
    SelectionVote,
    ScoreVote,
    GotMerge,
    JudgeCorrectness,
    JudgeErrorClass,
}

impl TemplateName {
    pub const ALL: [TemplateName; 12] = [
        TemplateName::AgentStep,
        TemplateName::SearchThought,
        TemplateName::SearchEnd,
        TemplateName::EntityExtraction,
        TemplateName::PruneRelations,
        TemplateName::PruneEntities,
        TemplateName::SearchAttributes,
        TemplateName::SelectionVote,
        TemplateName::ScoreVote,
        TemplateName::GotMerge,
        TemplateName::JudgeCorrectness,
        TemplateName::JudgeErrorClass,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::AgentStep => "agent_step",
            TemplateName::SearchThought => "search_thought",
            TemplateName::SearchEnd => "search_end",
            TemplateName::EntityExtraction => "entity_extraction",
            TemplateName::PruneRelations => "prune_relations",
            TemplateName::PruneEntities => "prune_entities",
            TemplateName::SearchAttributes => "search_attributes",
            TemplateName::SelectionVote => "selection_vote",
            TemplateName::ScoreVote => "score_vote",
            TemplateName::GotMerge => "got_merge",
            TemplateName::JudgeCorrectness => "judge_correctness",
            TemplateName::JudgeErrorClass => "judge_error_class",
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown template `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: String,
    pub required_placeholders: BTreeSet<String>,
}

impl PromptTemplate {
    pub fn new(name: TemplateName, body: impl Into<String>, placeholders: &[&str]) -> Self {
        Self {
            name,
            body: body.into(),
            required_placeholders: placeholders.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Substitutes every declared `{name}` marker. Unused variables are
    /// ignored; substituted text is not re-scanned.
    pub fn render(&self, vars: &BTreeMap<&str, String>) -> Result<String, LlmError> {
        let missing: Vec<String> = self
            .required_placeholders
            .iter()
            .filter(|p| !vars.contains_key(p.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(LlmError::MissingPlaceholder {
                template: self.name.to_string(),
                missing,
            });
        }
        let mut out = String::with_capacity(self.body.len() + 256);
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let ident_len = after
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .unwrap_or(after.len());
            let ident = &after[..ident_len];
            if ident_len > 0 && after[ident_len..].starts_with('}') && self.required_placeholders.contains(ident) {
                out.push_str(&vars[ident]);
                rest = &after[ident_len + 1..];
            } else {
                out.push('{');
                rest = after;
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

const AGENT_STEP: &str = "Solve a question answering task with interleaving Thought, Interaction with Graph, Feedback from Graph steps. In Thought step, you can think about what further information is needed, and In Interaction step, you can get feedback from graphs with four functions:
(1) RetrieveNode[keyword], which retrieves the related node from the graph according to the corresponding query.
(2) NodeFeature[Node, feature], which returns the detailed attribute information of Node regarding the given \"feature\" key.
(3) NodeDegree[Node, neighbor_type], which calculates the number of \"neighbor_type\" neighbors of the node Node in the graph.
(4) NeighbourCheck[Node, neighbor_type], which lists the \"neighbor_type\" neighbours of the node Node in the graph and returns them.
You may take as many steps as necessary.
Here are some examples:
{examples}
Please answer by providing node main feature (e.g., names) rather than node IDs.
Generate the next step.
Definition of the graph: {graph_definition}
Question: {question}
{scratchpad}";

const SEARCH_THOUGHT: &str = "Given the previous thoughts, generate the next thought to answer the provided question.
Your end goal is to answer the question step by step. For context, you are also provided with some knowledge triples from a knowledge base.
Follow the format of the examples to generate the next thought.

{examples}

Graph Definition: {graph_definition}
Question: {question}
Knowledge Triples:
{triples}
Previous thoughts:
{thoughts}
Related Entity Attributes:
{attributes}
Next Thought:";

const SEARCH_END: &str = "You are provided with an original question, the associated subquestion thoughts and their corresponding knowledge graph triples (head_entity -> relation -> tail_entity). Your task is to answer whether it's sufficient for you to answer the original question (Yes or No).
You are provided with examples. You should follow the same format as in the examples, writing 'Yes' or 'No' within brackets at the beginning of the answer.
{examples}
Task:
Question: {question}
Thoughts: {thoughts}
Knowledge Triples: {triples}
Entity Attributes: {attributes}
Answer:";

const ENTITY_EXTRACTION: &str = "Given the provided text, extract the relevant entities that may appear in a knowledge base. Return the answer at the end with brackets {{relevant entities}} as shown in the following examples. If there are several entities, separate them with commas.
{examples}
Task:
Text: {text}
Relevant Entities:";

const PRUNE_RELATIONS: &str = "From the given entity and relations, select only the relevant relations to answer the question. Provide the answer at the end with brackets {{answer}}, as shown in the following example.
{examples}
Question: {question}
Head Entity: {entity}
Relations: {relations}
Answer:";

const PRUNE_ENTITIES: &str = "You are provided with a question, a head entity, a relation and tail entity or entities from a knowledge base. Select the tail entity or entities to answer the question. Return the tail entity or entities at the end with brackets {{relevant entity or entities}}, as shown in the following examples.
{examples}
Question: {question}
Head Entity: {head_entity}
Relation: {relation}
Tail Entities: {tail_entities}
Relevant Entities:";

const SEARCH_ATTRIBUTES: &str = "Is any of the attributes relevant to answer the question? Return the answer at the end with brackets {{answer}}, as shown in the following examples.
{examples}
Question: {question}
Entity: {entity}
Attributes: {attributes}
Relevant Attributes:";

const SELECTION_VOTE: &str = "Given a question, you need to select the possible chain of thought that may lead to the correct answer with higher probability. You are provided with several choices with thoughts and related triples from a knowledge base. Decide which choice is most promising to complete the task. Analyze each choice in detail, then conclude in the last line: \"The best choice is {{s}}\", where s the integer id of the choice. When asked for several choices, put their ids inside the brackets separated by commas.
{examples}
Question: {question}
Number of choices to keep: {retain}
Choices:
{choices}
Answer:";

const SCORE_VOTE: &str = "Generate a score for the given reasoning chain. The score represents the probability that the chain will lead to the correct answer. The chains contain interleaved thoughts and related triples from a knowledge base. Some chains may not be complete, but you need to judge the steps that are provided. The score can be any floating number between 0 and 1.
{examples}
Question: {question}
Thought Chain:
{thoughts}
Score:";

const GOT_MERGE: &str = "Generate the next thought for the merged chain of thoughts. You are provided with the question, two chains of thoughts, and the corresponding merged chain of thought. Identify inconsistencies or errors from the previous chains and provide the next thought for the merged chain. You should follow the same format as in the examples.
{examples}
Question: {question}
Chain 1:
{chain_1}
Chain 2:
{chain_2}
Merged Chain:
{merged_chain}
Next Thought:";

const JUDGE_CORRECTNESS: &str = "You are given a question, its ground-truth answer and a model answer. Decide whether the model answer matches the ground truth: it may use different wording or order, but it must name the same entities or values. Reply with [Yes] or [No] at the beginning of your answer.
Question: {question}
Ground truth: {gold}
Model answer: {model_answer}
Verdict:";

const JUDGE_ERROR_CLASS: &str = "A model answered the question below incorrectly. Using the evidence it gathered while reasoning, label the failure:
[2] the correct answer appeared in the evidence but was not returned;
[3] the reasoning followed a wrong or illogical step.
Reply with [2] or [3] at the beginning of your answer.
Question: {question}
Ground truth: {gold}
Model answer: {model_answer}
Evidence:
{evidence}
Label:";

/// The built-in template set.
pub fn default_templates() -> BTreeMap<TemplateName, PromptTemplate> {
    use TemplateName::*;
    let ex = "examples";
    [
        PromptTemplate::new(
            AgentStep,
            AGENT_STEP,
            &[ex, "graph_definition", "question", "scratchpad"],
        ),
        PromptTemplate::new(
            SearchThought,
            SEARCH_THOUGHT,
            &[ex, "graph_definition", "question", "triples", "thoughts", "attributes"],
        ),
        PromptTemplate::new(
            SearchEnd,
            SEARCH_END,
            &[ex, "question", "thoughts", "triples", "attributes"],
        ),
        PromptTemplate::new(EntityExtraction, ENTITY_EXTRACTION, &[ex, "text"]),
        PromptTemplate::new(
            PruneRelations,
            PRUNE_RELATIONS,
            &[ex, "question", "entity", "relations"],
        ),
        PromptTemplate::new(
            PruneEntities,
            PRUNE_ENTITIES,
            &[ex, "question", "head_entity", "relation", "tail_entities"],
        ),
        PromptTemplate::new(
            SearchAttributes,
            SEARCH_ATTRIBUTES,
            &[ex, "question", "entity", "attributes"],
        ),
        PromptTemplate::new(SelectionVote, SELECTION_VOTE, &[ex, "question", "retain", "choices"]),
        PromptTemplate::new(ScoreVote, SCORE_VOTE, &[ex, "question", "thoughts"]),
        PromptTemplate::new(
            GotMerge,
            GOT_MERGE,
            &[ex, "question", "chain_1", "chain_2", "merged_chain"],
        ),
        PromptTemplate::new(
            JudgeCorrectness,
            JUDGE_CORRECTNESS,
            &["question", "gold", "model_answer"],
        ),
        PromptTemplate::new(
            JudgeErrorClass,
            JUDGE_ERROR_CLASS,
            &["question", "gold", "model_answer", "evidence"],
        ),
    ]
    .into_iter()
    .map(|t| (t.name, t))
    .collect()
}

/// Few-shot examples shipped for the synthetic domain.
fn builtin_examples() -> HashMap<(TemplateName, String), String> {
    let synthetic = [
        (
            TemplateName::AgentStep,
            include_str!("../../assets/examples/synthetic/agent_step.txt"),
        ),
        (
            TemplateName::SearchThought,
            include_str!("../../assets/examples/synthetic/search_thought.txt"),
        ),
        (
            TemplateName::EntityExtraction,
            include_str!("../../assets/examples/synthetic/entity_extraction.txt"),
        ),
        (
            TemplateName::PruneRelations,
            include_str!("../../assets/examples/synthetic/prune_relations.txt"),
        ),
    ];
    synthetic
        .into_iter()
        .map(|(t, text)| ((t, "synthetic".to_string()), text.trim_end().to_string()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct PromptRegistry {
    templates: BTreeMap<TemplateName, PromptTemplate>,
    examples: HashMap<(TemplateName, String), String>,
}

impl Default for PromptRegistry {
    fn default() -> Self {
        Self {
            templates: default_templates(),
            examples: builtin_examples(),
        }
    }
}

impl PromptRegistry {
    /// Registry without any few-shot examples.
    pub fn bare() -> Self {
        Self {
            templates: default_templates(),
            examples: HashMap::new(),
        }
    }

    /// Loads `<dir>/<domain>/<template>.txt` files on top of the built-ins.
    pub fn with_assets(mut self, dir: impl AsRef<Path>) -> Result<Self, LlmError> {
        let dir = dir.as_ref();
        let io = |e: std::io::Error| LlmError::Config(format!("{}: {e}", dir.display()));
        for domain_dir in fs::read_dir(dir).map_err(io)? {
            let domain_dir = domain_dir.map_err(io)?.path();
            if !domain_dir.is_dir() {
                continue;
            }
            let domain = domain_dir
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            for file in fs::read_dir(&domain_dir).map_err(io)? {
                let path = file.map_err(io)?.path();
                let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                    continue;
                };
                let Ok(name) = stem.parse::<TemplateName>() else {
                    continue;
                };
                let text = fs::read_to_string(&path).map_err(io)?;
                self.examples
                    .insert((name, domain.clone()), text.trim_end().to_string());
            }
        }
        Ok(self)
    }

    pub fn set_examples(&mut self, name: TemplateName, domain: &str, text: impl Into<String>) {
        self.examples.insert((name, domain.to_string()), text.into());
    }

    pub fn template(&self, name: TemplateName) -> &PromptTemplate {
        &self.templates[&name]
    }

    /// Renders `name`, filling `{examples}` from the asset for `domain`
    /// (empty when none) unless the caller supplied it.
    pub fn render(&self, name: TemplateName, domain: &str, vars: &BTreeMap<&str, String>) -> Result<String, LlmError> {
        let template = self.template(name);
        if template.required_placeholders.contains("examples") && !vars.contains_key("examples") {
            let mut vars = vars.clone();
            let examples = self
                .examples
                .get(&(name, domain.to_string()))
                .cloned()
                .unwrap_or_default();
            vars.insert("examples", examples);
            return template.render(&vars);
        }
        template.render(vars)
    }
}
