//! Questions, answer scoring, the LLM judge and result aggregation.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::Termination;
use crate::cost::{tags, CostCounters};
use crate::kg::{KnowledgeGraph, NodeRecord};
use crate::llm::parse::parse_leading_bracket;
use crate::llm::parse::parse_yes_no;
use crate::llm::{CompletionRequest, Decoding, Gateway, LlmError, PromptRegistry, TemplateName};
use crate::text::tokenize;

/// Domain assumed when a question file does not name one.
pub const DEFAULT_DOMAIN: &str = "general";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub qid: String,
    pub text: String,
    pub gold_answer: String,
    pub difficulty: Difficulty,
    pub domain: String,
}

impl Question {
    pub fn new(qid: impl Into<String>, text: impl Into<String>, gold: impl Into<String>) -> Self {
        Self {
            qid: qid.into(),
            text: text.into(),
            gold_answer: gold.into(),
            difficulty: Difficulty::Easy,
            domain: DEFAULT_DOMAIN.to_string(),
        }
    }

    pub fn with_difficulty(mut self, d: Difficulty) -> Self {
        self.difficulty = d;
        self
    }

    pub fn with_domain(mut self, domain: impl Into<String>) -> Self {
        self.domain = domain.into();
        self
    }
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct QuestionLine {
    qid: String,
    question: String,
    answer: String,
    difficulty: Difficulty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QuestionError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate question id `{0}`")]
    DuplicateQid(String),
}

/// Parses a line-delimited question file. Blank lines are skipped.
pub fn parse_questions(text: &str) -> Result<Vec<Question>, QuestionError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| QuestionError::Malformed { line: i + 1, message };
        let rec: QuestionLine = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if rec.question.trim().is_empty() {
            return Err(malformed("question text is empty".into()));
        }
        if !seen.insert(rec.qid.clone()) {
            return Err(QuestionError::DuplicateQid(rec.qid));
        }
        out.push(Question {
            qid: rec.qid,
            text: rec.question,
            gold_answer: rec.answer,
            difficulty: rec.difficulty,
            domain: rec.domain.unwrap_or_else(|| DEFAULT_DOMAIN.to_string()),
        });
    }
    Ok(out)
}

pub fn load_questions(path: impl AsRef<Path>) -> Result<Vec<Question>, QuestionError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| QuestionError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_questions(&text)
}

/// One JSON line per question, in the format [`parse_questions`] reads.
pub fn questions_to_lines(questions: &[Question]) -> String {
    let mut out = String::new();
    for q in questions {
        let line = QuestionLine {
            qid: q.qid.clone(),
            question: q.text.clone(),
            answer: q.gold_answer.clone(),
            difficulty: q.difficulty,
            domain: Some(q.domain.clone()),
        };
        out.push_str(&serde_json::to_string(&line).expect("question serializes"));
        out.push('\n');
    }
    out
}

/// Seeded questions over a graph: one-hop neighbor lookups (easy),
/// two-hop lookups (medium) and neighbor counts (hard), cycling through
/// the three kinds. Nodes without out-edges are skipped.
pub fn synthetic_questions(graph: &KnowledgeGraph, count: usize, seed: u64) -> Vec<Question> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heads: Vec<&NodeRecord> = graph
        .nodes()
        .filter(|n| n.out_edges.values().any(|t| !t.is_empty()))
        .collect();
    let mut out = Vec::new();
    if heads.is_empty() {
        return out;
    }
    let names = |ids: &[String]| -> Vec<String> {
        let mut v: Vec<String> = Vec::new();
        for id in ids {
            let name = graph.name_of(id).unwrap_or(id).to_string();
            if !v.contains(&name) {
                v.push(name);
            }
        }
        v
    };
    let mut attempts = 0;
    while out.len() < count && attempts < count * 50 {
        attempts += 1;
        let head = heads[rng.gen_range(0..heads.len())];
        let rels: Vec<(&String, &Vec<String>)> = head.out_edges.iter().filter(|(_, t)| !t.is_empty()).collect();
        let (rel, tails) = rels[rng.gen_range(0..rels.len())];
        let qid = format!("syn-{}", out.len() + 1);
        let q = match out.len() % 3 {
            0 => Question::new(
                qid,
                format!("Which nodes does {} reach through {rel}?", head.name()),
                names(tails).join(", "),
            ),
            1 => {
                let rel2 = tails.iter().find_map(|t| {
                    let node = graph.node(t).expect("edge targets exist");
                    node.out_edges
                        .iter()
                        .find(|(_, ts)| !ts.is_empty())
                        .map(|(r, _)| r.clone())
                });
                let second: Vec<String> = rel2
                    .iter()
                    .flat_map(|r2| {
                        tails
                            .iter()
                            .flat_map(move |t| graph.neighbor_check(t, r2).unwrap_or_default().iter().cloned())
                    })
                    .collect();
                let Some(rel2) = rel2 else { continue };
                Question::new(
                    qid,
                    format!(
                        "Which nodes are reached from {} through {rel} and then {rel2}?",
                        head.name()
                    ),
                    names(&second).join(", "),
                )
                .with_difficulty(Difficulty::Medium)
            }
            _ => Question::new(
                qid,
                format!("How many {rel} neighbors does {} have?", head.name()),
                tails.len().to_string(),
            )
            .with_difficulty(Difficulty::Hard),
        };
        out.push(q.with_domain("synthetic"));
    }
    out
}

/// Length of the longest common subsequence of two token sequences.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// F1 of LCS precision and recall over case-folded alphanumeric tokens.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    rouge_l_tokens(&tokenize(candidate), &tokenize(reference))
}

pub fn rouge_l_tokens(candidate: &[String], reference: &[String]) -> f64 {
    let l = lcs_len(candidate, reference);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / candidate.len() as f64;
    let r = l as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Token sequences equal after case folding.
pub fn exact_match(candidate: &str, reference: &str) -> bool {
    tokenize(candidate) == tokenize(reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    ReachedLimit,
    FoundNotReturned,
    WrongStep,
    Correct,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 4] = [
        ErrorClass::ReachedLimit,
        ErrorClass::FoundNotReturned,
        ErrorClass::WrongStep,
        ErrorClass::Correct,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::ReachedLimit => "reached_limit",
            ErrorClass::FoundNotReturned => "found_not_returned",
            ErrorClass::WrongStep => "wrong_step",
            ErrorClass::Correct => "correct",
        }
    }
}

impl FromStr for ErrorClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ErrorClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown error class `{s}`"))
    }
}

/// Prompt registry and gateway used for judging.
#[derive(Clone, Copy)]
pub struct Judge<'a> {
    pub gateway: Gateway<'a>,
    pub prompts: &'a PromptRegistry,
}

impl<'a> Judge<'a> {
    pub fn new(gateway: Gateway<'a>, prompts: &'a PromptRegistry) -> Self {
        Self { gateway, prompts }
    }

    fn ask(&self, name: TemplateName, vars: BTreeMap<&str, String>, tag: &str) -> Result<String, LlmError> {
        let prompt = self.prompts.render(name, "", &vars)?;
        self.gateway
            .complete(&CompletionRequest::new(prompt, Decoding::control(), tag))
    }

    /// One judge call; `None` when the verdict cannot be parsed.
    pub fn judge_correct(&self, q: &Question, model_answer: &str) -> Result<Option<bool>, LlmError> {
        let vars = BTreeMap::from([
            ("question", q.text.clone()),
            ("gold", q.gold_answer.clone()),
            ("model_answer", model_answer.to_string()),
        ]);
        let reply = self.ask(TemplateName::JudgeCorrectness, vars, tags::JUDGE)?;
        Ok(parse_yes_no(&reply))
    }

    /// Labels a run. Limit hits and judged-correct answers are labelled
    /// without a call; otherwise the judge picks between an answer that
    /// appeared in `evidence` and a wrong step. Unparseable labels count
    /// as a wrong step.
    pub fn classify_error(&self, q: &Question, outcome: &RunOutcome<'_>) -> Result<ErrorClass, LlmError> {
        if outcome.judge_correct == Some(true) {
            return Ok(ErrorClass::Correct);
        }
        if outcome.termination == Termination::StepLimit {
            return Ok(ErrorClass::ReachedLimit);
        }
        let vars = BTreeMap::from([
            ("question", q.text.clone()),
            ("gold", q.gold_answer.clone()),
            ("model_answer", outcome.answer.unwrap_or_default().to_string()),
            ("evidence", outcome.evidence.join("\n")),
        ]);
        let reply = self.ask(TemplateName::JudgeErrorClass, vars, tags::JUDGE_ERROR)?;
        Ok(match parse_leading_bracket(&reply).ok().as_deref().map(str::trim) {
            Some("2") => ErrorClass::FoundNotReturned,
            _ => ErrorClass::WrongStep,
        })
    }
}

/// What the judge needs to know about a finished run.
#[derive(Debug, Clone, Copy)]
pub struct RunOutcome<'a> {
    pub answer: Option<&'a str>,
    pub termination: Termination,
    pub judge_correct: Option<bool>,
    /// Triples and observations gathered while reasoning.
    pub evidence: &'a [String],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub qid: String,
    pub domain: String,
    pub difficulty: Difficulty,
    pub model_answer: Option<String>,
    pub rouge_l: Option<f64>,
    pub exact_match: bool,
    pub judge_correct: Option<bool>,
    pub error_class: Option<ErrorClass>,
}

impl EvalResult {
    /// Scores `answer` against the question's gold answer; judge fields
    /// are filled by the caller.
    pub fn score(q: &Question, answer: Option<&str>) -> Self {
        Self {
            qid: q.qid.clone(),
            domain: q.domain.clone(),
            difficulty: q.difficulty,
            model_answer: answer.map(str::to_string),
            rouge_l: answer.map(|a| rouge_l(a, &q.gold_answer)),
            exact_match: answer.is_some_and(|a| exact_match(a, &q.gold_answer)),
            judge_correct: None,
            error_class: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.rouge_l.is_some() != self.model_answer.is_some() {
            return Err(format!("{}: rouge_l present without an answer or vice versa", self.qid));
        }
        if let Some(r) = self.rouge_l {
            if !(0.0..=1.0).contains(&r) {
                return Err(format!("{}: rouge_l {r} out of range", self.qid));
            }
        }
        if (self.error_class == Some(ErrorClass::Correct)) != (self.judge_correct == Some(true)) {
            return Err(format!("{}: error class disagrees with the judge", self.qid));
        }
        Ok(())
    }
}

/// Order-independent mean: values are summed in sorted order.
fn mean(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    Some(values.into_iter().sum::<f64>() / n)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    /// Mean over all questions; a missing answer scores 0.
    pub rouge_l: f64,
    /// Percentage of judged answers deemed correct; absent when nothing
    /// was judged.
    pub judge_rate: Option<f64>,
    pub judged: usize,
    pub judge_absent: usize,
    pub exact_match_rate: f64,
}

impl GroupStats {
    fn of(results: &[&EvalResult]) -> Self {
        let judged: Vec<bool> = results.iter().filter_map(|r| r.judge_correct).collect();
        let count = results.len();
        Self {
            count,
            rouge_l: mean(results.iter().map(|r| r.rouge_l.unwrap_or(0.0)).collect()).unwrap_or(0.0),
            judge_rate: (!judged.is_empty())
                .then(|| 100.0 * judged.iter().filter(|&&c| c).count() as f64 / judged.len() as f64),
            judged: judged.len(),
            judge_absent: count - judged.len(),
            exact_match_rate: if count == 0 {
                0.0
            } else {
                100.0 * results.iter().filter(|r| r.exact_match).count() as f64 / count as f64
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub generation_calls: f64,
    pub llm_calls: f64,
    pub kg_ops: f64,
    pub explore_searches: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub overall: GroupStats,
    pub by_domain: BTreeMap<String, GroupStats>,
    pub by_difficulty: BTreeMap<Difficulty, GroupStats>,
    /// Keyed `domain/difficulty`.
    pub by_domain_difficulty: BTreeMap<String, GroupStats>,
    /// Counts per class over results that carry one.
    pub error_counts: BTreeMap<ErrorClass, usize>,
    /// Percentages of `error_counts`; sums to 100 when anything was labelled.
    pub error_distribution: BTreeMap<ErrorClass, f64>,
    pub costs: CostSummary,
}

pub fn aggregate(results: &[EvalResult], costs: &[CostCounters]) -> AggregateReport {
    let all: Vec<&EvalResult> = results.iter().collect();
    let group = |key: &dyn Fn(&EvalResult) -> String| {
        let mut groups: BTreeMap<String, Vec<&EvalResult>> = BTreeMap::new();
        for r in results {
            groups.entry(key(r)).or_default().push(r);
        }
        groups
            .into_iter()
            .map(|(k, v)| (k, GroupStats::of(&v)))
            .collect::<BTreeMap<_, _>>()
    };
    let mut by_difficulty: BTreeMap<Difficulty, Vec<&EvalResult>> = BTreeMap::new();
    for r in results {
        by_difficulty.entry(r.difficulty).or_default().push(r);
    }

    let mut error_counts: BTreeMap<ErrorClass, usize> = BTreeMap::new();
    for c in results.iter().filter_map(|r| r.error_class) {
        *error_counts.entry(c).or_default() += 1;
    }
    let labelled: usize = error_counts.values().sum();
    let error_distribution = error_counts
        .iter()
        .map(|(&c, &n)| (c, 100.0 * n as f64 / labelled as f64))
        .collect();

    let cost_mean = |f: &dyn Fn(&CostCounters) -> u64| mean(costs.iter().map(|c| f(c) as f64).collect()).unwrap_or(0.0);
    AggregateReport {
        overall: GroupStats::of(&all),
        by_domain: group(&|r| r.domain.clone()),
        by_difficulty: by_difficulty
            .into_iter()
            .map(|(k, v)| (k, GroupStats::of(&v)))
            .collect(),
        by_domain_difficulty: group(&|r| format!("{}/{}", r.domain, r.difficulty)),
        error_counts,
        error_distribution,
        costs: CostSummary {
            generation_calls: cost_mean(&|c| c.generation_calls()),
            llm_calls: cost_mean(&|c| c.total_llm_calls()),
            kg_ops: cost_mean(&|c| c.total_kg_ops()),
            explore_searches: cost_mean(&|c| c.explore_searches()),
        },
    }
}
