//! Batch experiments: configuration, per-question pipelines, trace and
//! report files, parameter sweeps and re-scoring.
//!
//! A run writes `traces/<qid>.trace`, `results.lines` and `report.table`
//! under its output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::Termination;
use crate::context::Context;
use crate::cost::{bound_for, check, tags, Meter};
use crate::eval::{
    aggregate, load_questions, AggregateReport, ErrorClass, EvalResult, Judge, Question, QuestionError, RunOutcome,
};
use crate::explore::ExploreConfig;
use crate::kg::{load_graph_with, KgError, KnowledgeGraph, LoadOptions};
use crate::llm::{Backend, Gateway, LlmError, PromptRegistry, ReplayScript, WireBackend, WireConfig};
use crate::search::{run_search, Evaluator, Interaction, ReasoningGraph, SearchConfig, Strategy};
use crate::trace::{
    method_label, ConfigEcho, Judgement, TraceRecord, REPORT_SCHEMA, RESULTS_SCHEMA, SWEEP_SCHEMA, TRACE_SCHEMA,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] KgError),
    #[error(transparent)]
    Questions(#[from] QuestionError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: invalid trace: {message}")]
    Trace { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |e| RunError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BackendSpec {
    Replay { path: PathBuf, strict: bool },
    Wire { endpoint: String, model: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    None,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub kg_path: PathBuf,
    pub questions_path: PathBuf,
    pub strategy: Strategy,
    pub interaction: Interaction,
    pub evaluator: Evaluator,
    /// Step budget for chains.
    pub n: usize,
    pub k: usize,
    pub t: usize,
    pub d_max: usize,
    pub search_depth: usize,
    pub max_relations_per_entity: usize,
    pub max_neighbors_per_relation: usize,
    pub score_votes: usize,
    pub thought_temperature: f64,
    pub backend: BackendSpec,
    pub judge: JudgeMode,
    /// Replay script for the judge; required when judging under replay.
    pub judge_replay: Option<PathBuf>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub concurrency: usize,
    /// Materialize inverse relations with this prefix on load.
    pub inverse_prefix: Option<String>,
    /// Directory of few-shot example assets, `<dir>/<domain>/<template>.txt`.
    pub assets_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(
        kg_path: impl Into<PathBuf>,
        questions_path: impl Into<PathBuf>,
        backend: BackendSpec,
        out_dir: impl Into<PathBuf>,
    ) -> Self {
        let search = SearchConfig::default();
        let explore = ExploreConfig::default();
        Self {
            kg_path: kg_path.into(),
            questions_path: questions_path.into(),
            strategy: Strategy::Cot,
            interaction: Interaction::Agent,
            evaluator: search.evaluator,
            n: 10,
            k: search.k,
            t: search.t,
            d_max: search.d_max,
            search_depth: explore.search_depth,
            max_relations_per_entity: explore.max_relations_per_entity,
            max_neighbors_per_relation: explore.max_neighbors_per_relation,
            score_votes: search.score_votes,
            thought_temperature: search.thought_temperature,
            backend,
            judge: JudgeMode::None,
            judge_replay: None,
            seed: 0,
            out_dir: out_dir.into(),
            concurrency: 4,
            inverse_prefix: None,
            assets_dir: None,
        }
    }

    /// The search settings; a chain uses `k = t = 1` and `n` rounds.
    pub fn search_config(&self) -> SearchConfig {
        let chain = self.strategy == Strategy::Cot;
        SearchConfig {
            strategy: self.strategy,
            interaction: self.interaction,
            evaluator: self.evaluator,
            k: if chain { 1 } else { self.k },
            t: if chain { 1 } else { self.t },
            d_max: if chain { self.n } else { self.d_max },
            score_votes: self.score_votes,
            thought_temperature: self.thought_temperature,
            explore: ExploreConfig {
                search_depth: self.search_depth,
                max_relations_per_entity: self.max_relations_per_entity,
                max_neighbors_per_relation: self.max_neighbors_per_relation,
            },
            ..SearchConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.search_config().validate().map_err(RunError::Config)?;
        if self.n == 0 {
            return Err(RunError::Config("steps must be at least 1".into()));
        }
        if self.concurrency == 0 {
            return Err(RunError::Config("concurrency must be at least 1".into()));
        }
        if self.judge == JudgeMode::Llm
            && matches!(self.backend, BackendSpec::Replay { .. })
            && self.judge_replay.is_none()
        {
            return Err(RunError::Config(
                "judging under the replay backend needs a judge replay script".into(),
            ));
        }
        Ok(())
    }

    fn echo(&self) -> ConfigEcho {
        let (backend, model) = match &self.backend {
            BackendSpec::Replay { .. } => ("replay".to_string(), None),
            BackendSpec::Wire { model, .. } => ("wire".to_string(), Some(model.clone())),
        };
        ConfigEcho {
            search: self.search_config(),
            n: self.n,
            seed: self.seed,
            backend,
            model,
            judge: match self.judge {
                JudgeMode::None => "none".into(),
                JudgeMode::Llm => "llm".into(),
            },
        }
    }
}

fn build_backend(spec: &BackendSpec, seed: u64) -> Result<Box<dyn Backend>, RunError> {
    Ok(match spec {
        BackendSpec::Replay { path, strict } => Box::new(ReplayScript::load(path, *strict)?),
        BackendSpec::Wire { endpoint, model } => {
            let mut cfg = WireConfig::new(endpoint.clone(), model.clone());
            cfg.seed = Some(seed);
            Box::new(WireBackend::new(cfg)?)
        }
    })
}

/// File name for a question's trace: the qid with unsafe characters
/// replaced by `_`.
pub fn trace_file_name(qid: &str) -> String {
    let safe: String = qid
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.trace")
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

struct Pipeline<'a> {
    cfg: &'a RunConfig,
    search: SearchConfig,
    echo: ConfigEcho,
    graph: &'a KnowledgeGraph,
    prompts: &'a PromptRegistry,
    backend: &'a dyn Backend,
    judge: Option<&'a dyn Backend>,
}

impl Pipeline<'_> {
    fn run(&self, index: usize, q: &Question) -> TraceRecord {
        let deterministic = self.backend.is_deterministic();
        let started = (!deterministic).then(unix_ms);
        let meter = Meter::new(!deterministic);
        let ctx = Context::new(self.graph, Gateway::new(self.backend, &meter), self.prompts);
        let (graph, answer, termination, error) = match run_search(&ctx, q, &self.search) {
            Ok(out) => (out.graph, out.answer, out.termination, None),
            Err(e) => {
                let mut empty = ReasoningGraph::new(q, self.search.interaction);
                empty.frontier.clear();
                (empty, None, Termination::StepLimit, Some(e.to_string()))
            }
        };
        let counters = meter.snapshot();
        let bound = bound_for(&self.search, self.cfg.n as u64, self.cfg.search_depth as u64);
        let bound_check = check(&counters, &bound);
        let mut record = TraceRecord {
            schema: TRACE_SCHEMA.to_string(),
            index,
            question: q.clone(),
            config: self.echo.clone(),
            graph,
            answer,
            termination,
            counters,
            bound,
            bound_check,
            judgement: Judgement::default(),
            error,
            started_unix_ms: started,
            finished_unix_ms: None,
        };
        record.judgement = self.judge(&record);
        record.finished_unix_ms = started.map(|_| unix_ms());
        record
    }

    fn judge(&self, record: &TraceRecord) -> Judgement {
        match self.judge {
            Some(backend) => {
                let meter = Meter::new(false);
                judge_trace(&Judge::new(Gateway::new(backend, &meter), self.prompts), record)
            }
            None => judge_trace_offline(record),
        }
    }
}

/// Judgement without a judge model: only limit hits can be labelled.
pub fn judge_trace_offline(record: &TraceRecord) -> Judgement {
    let mechanical = record.error.is_none() && record.termination == Termination::StepLimit;
    Judgement {
        error_class: mechanical.then_some(ErrorClass::ReachedLimit),
        ..Judgement::default()
    }
}

/// Judges a finished trace: correctness first (a missing answer is
/// incorrect without a call), then the error label. Judge failures leave
/// the corresponding field absent. Failed pipelines are not judged.
pub fn judge_trace(judge: &Judge<'_>, record: &TraceRecord) -> Judgement {
    if record.error.is_some() {
        return Judgement::default();
    }
    let meter = judge.gateway.meter();
    let before = meter.snapshot();
    let q = &record.question;
    let judge_correct = match record.answer.as_deref() {
        Some(a) => judge.judge_correct(q, a).ok().flatten(),
        None => Some(false),
    };
    let evidence = record.evidence();
    let outcome = RunOutcome {
        answer: record.answer.as_deref(),
        termination: record.termination,
        judge_correct,
        evidence: &evidence,
    };
    let error_class = judge.classify_error(q, &outcome).ok();
    let after = meter.snapshot();
    Judgement {
        judge_correct,
        error_class,
        judge_calls: after.llm_calls(tags::JUDGE) - before.llm_calls(tags::JUDGE),
        classify_calls: after.llm_calls(tags::JUDGE_ERROR) - before.llm_calls(tags::JUDGE_ERROR),
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub traces: Vec<TraceRecord>,
    pub results: Vec<EvalResult>,
    pub report: AggregateReport,
}

impl RunSummary {
    pub fn method(&self) -> String {
        self.traces.first().map(|t| t.config.method()).unwrap_or_default()
    }
}

/// Runs every question and writes traces, results and report.
///
/// All inputs are loaded and checked before anything is written, so a bad
/// configuration leaves `out_dir` untouched. A question whose pipeline
/// fails is recorded with its error and the run continues.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    cfg.validate()?;
    let opts = LoadOptions {
        inverse_prefix: cfg.inverse_prefix.clone(),
    };
    let graph = load_graph_with(&cfg.kg_path, &opts)?;
    let questions = load_questions(&cfg.questions_path)?;
    let mut names = std::collections::HashSet::new();
    for q in &questions {
        if !names.insert(trace_file_name(&q.qid)) {
            return Err(RunError::Config(format!(
                "question id `{}` collides with another trace file name",
                q.qid
            )));
        }
    }
    let prompts = match &cfg.assets_dir {
        Some(dir) => PromptRegistry::default().with_assets(dir)?,
        None => PromptRegistry::default(),
    };
    let backend = build_backend(&cfg.backend, cfg.seed)?;
    let judge_backend: Option<Box<dyn Backend>> = match (cfg.judge, &cfg.judge_replay) {
        (JudgeMode::None, _) => None,
        (JudgeMode::Llm, Some(path)) => Some(Box::new(ReplayScript::load(path, false)?)),
        (JudgeMode::Llm, None) => Some(build_backend(&cfg.backend, cfg.seed)?),
    };

    let traces_dir = cfg.out_dir.join("traces");
    fs::create_dir_all(&traces_dir).map_err(io_err(&traces_dir))?;

    let pipeline = Pipeline {
        cfg,
        search: cfg.search_config(),
        echo: cfg.echo(),
        graph: &graph,
        prompts: &prompts,
        backend: backend.as_ref(),
        judge: judge_backend.as_deref(),
    };
    let strict = matches!(cfg.backend, BackendSpec::Replay { strict: true, .. });
    let workers = if strict {
        1
    } else {
        cfg.concurrency.min(questions.len()).max(1)
    };
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<TraceRecord>>> = Mutex::new(vec![None; questions.len()]);
    let write_error: Mutex<Option<RunError>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(q) = questions.get(i) else { break };
                let record = pipeline.run(i, q);
                let path = traces_dir.join(trace_file_name(&q.qid));
                if let Err(e) = fs::write(&path, record.to_text()) {
                    write_error
                        .lock()
                        .expect("lock poisoned")
                        .get_or_insert(io_err(&path)(e));
                }
                slots.lock().expect("lock poisoned")[i] = Some(record);
            });
        }
    });
    if let Some(e) = write_error.into_inner().expect("lock poisoned") {
        return Err(e);
    }
    let traces: Vec<TraceRecord> = slots
        .into_inner()
        .expect("lock poisoned")
        .into_iter()
        .map(|t| t.expect("every question ran"))
        .collect();
    write_outputs(&cfg.out_dir, &method_label(&pipeline.search), traces)
}

fn write_outputs(dir: &Path, method: &str, traces: Vec<TraceRecord>) -> Result<RunSummary, RunError> {
    let results: Vec<EvalResult> = traces.iter().map(TraceRecord::eval_result).collect();
    let costs: Vec<_> = traces.iter().map(|t| t.counters.clone()).collect();
    let report = aggregate(&results, &costs);
    let violations = traces.iter().filter(|t| !t.bound_check.ok).count();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let results_path = dir.join("results.lines");
    fs::write(&results_path, render_results(method, &results)).map_err(io_err(&results_path))?;
    let report_path = dir.join("report.table");
    fs::write(&report_path, render_report(method, &report, violations)).map_err(io_err(&report_path))?;
    Ok(RunSummary {
        traces,
        results,
        report,
    })
}

/// A schema header line followed by one JSON record per question.
pub fn render_results(method: &str, results: &[EvalResult]) -> String {
    let mut out = serde_json::json!({ "schema": RESULTS_SCHEMA, "method": method }).to_string();
    out.push('\n');
    for r in results {
        out.push_str(&serde_json::to_string(r).expect("result serializes"));
        out.push('\n');
    }
    out
}

fn rate(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".to_string(), |v| format!("{v:.1}"))
}

/// Human-readable report: one method row with a column pair per domain,
/// then difficulty, error-class and cost blocks.
pub fn render_report(method: &str, report: &AggregateReport, bound_violations: usize) -> String {
    let mut out = String::new();
    writeln!(out, "# {REPORT_SCHEMA}").unwrap();
    writeln!(
        out,
        "# R-L: mean LCS F1 over case-folded alphanumeric tokens (missing answers score 0)"
    )
    .unwrap();
    writeln!(out, "# judge: % of judged answers deemed correct").unwrap();
    writeln!(out).unwrap();

    let mut header = format!("{:<24}", "method");
    let mut row = format!("{method:<24}");
    let mut columns: Vec<(&str, &crate::eval::GroupStats)> = vec![("all", &report.overall)];
    columns.extend(report.by_domain.iter().map(|(d, s)| (d.as_str(), s)));
    for (name, stats) in columns {
        write!(
            header,
            " | {:>14} | {:>14}",
            format!("{name} R-L"),
            format!("{name} judge")
        )
        .unwrap();
        write!(row, " | {:>14.3} | {:>14}", stats.rouge_l, rate(stats.judge_rate)).unwrap();
    }
    writeln!(out, "{header}\n{row}\n").unwrap();

    writeln!(
        out,
        "{:<24} | {:>5} | {:>7} | {:>7} | {:>7} | {:>7}",
        "group", "count", "R-L", "judge", "judged", "EM %"
    )
    .unwrap();
    let groups = std::iter::once(("all".to_string(), &report.overall))
        .chain(report.by_difficulty.iter().map(|(d, s)| (d.to_string(), s)))
        .chain(report.by_domain_difficulty.iter().map(|(k, s)| (k.clone(), s)));
    for (name, s) in groups {
        writeln!(
            out,
            "{name:<24} | {:>5} | {:>7.3} | {:>7} | {:>7} | {:>7.1}",
            s.count,
            s.rouge_l,
            rate(s.judge_rate),
            s.judged,
            s.exact_match_rate
        )
        .unwrap();
    }
    writeln!(out).unwrap();

    writeln!(out, "{:<24} | {:>5} | {:>7}", "error class", "count", "share %").unwrap();
    for class in ErrorClass::ALL {
        let n = report.error_counts.get(&class).copied().unwrap_or(0);
        let share = report.error_distribution.get(&class).copied().unwrap_or(0.0);
        writeln!(out, "{:<24} | {n:>5} | {share:>7.1}", class.as_str()).unwrap();
    }
    writeln!(out).unwrap();

    let c = &report.costs;
    writeln!(out, "mean generation calls    {:.2}", c.generation_calls).unwrap();
    writeln!(out, "mean llm calls           {:.2}", c.llm_calls).unwrap();
    writeln!(out, "mean kg ops              {:.2}", c.kg_ops).unwrap();
    writeln!(out, "mean explore searches    {:.2}", c.explore_searches).unwrap();
    writeln!(out, "cost bound violations    {bound_violations}").unwrap();
    out
}

fn trace_files(dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let traces = if dir.join("traces").is_dir() {
        dir.join("traces")
    } else {
        dir.to_path_buf()
    };
    let mut files: Vec<PathBuf> = fs::read_dir(&traces)
        .map_err(io_err(&traces))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "trace"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn read_trace(path: &Path) -> Result<TraceRecord, RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    TraceRecord::from_text(&text).map_err(|message| RunError::Trace {
        path: path.display().to_string(),
        message,
    })
}

/// Reads every trace under `dir` (a run directory or its `traces/`),
/// ordered by question position.
pub fn read_traces(dir: &Path) -> Result<Vec<TraceRecord>, RunError> {
    let mut traces = trace_files(dir)?
        .iter()
        .map(|p| read_trace(p))
        .collect::<Result<Vec<_>, _>>()?;
    traces.sort_by_key(|t| t.index);
    Ok(traces)
}

/// Recomputes results and report from stored traces and writes them to
/// `dest`.
pub fn score_traces(dir: &Path, dest: &Path) -> Result<RunSummary, RunError> {
    let traces = read_traces(dir)?;
    let method = traces.first().map(|t| t.config.method()).unwrap_or_default();
    write_outputs(dest, &method, traces)
}

/// Validates a single trace file or every trace under a directory.
/// Returns `(file, violations)` for each file read.
pub fn validate_traces(path: &Path) -> Result<Vec<(PathBuf, Vec<String>)>, RunError> {
    let files = if path.is_dir() {
        trace_files(path)?
    } else {
        vec![path.to_path_buf()]
    };
    files
        .into_iter()
        .map(|f| {
            let t = read_trace(&f)?;
            Ok((f, t.validate()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Steps,
    Depth,
    Width,
    Evaluator,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Steps => "steps",
            SweepAxis::Depth => "depth",
            SweepAxis::Width => "width",
            SweepAxis::Evaluator => "evaluator",
        }
    }

    /// Applies one axis value to `cfg`.
    pub fn apply(self, cfg: &mut RunConfig, value: &str) -> Result<(), RunError> {
        let number = || {
            value
                .parse::<usize>()
                .map_err(|_| RunError::Config(format!("{} value `{value}` is not a positive integer", self.as_str())))
        };
        match self {
            SweepAxis::Steps => {
                cfg.n = number()?;
                cfg.d_max = cfg.n;
            }
            SweepAxis::Depth => cfg.search_depth = number()?,
            SweepAxis::Width => {
                let w = number()?;
                cfg.k = w;
                cfg.t = w;
            }
            SweepAxis::Evaluator => cfg.evaluator = value.parse().map_err(RunError::Config)?,
        }
        Ok(())
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [
            SweepAxis::Steps,
            SweepAxis::Depth,
            SweepAxis::Width,
            SweepAxis::Evaluator,
        ]
        .into_iter()
        .find(|a| a.as_str() == s)
        .ok_or_else(|| format!("unknown sweep axis `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub metric: String,
    /// Absent when the metric is undefined (nothing judged).
    pub score: Option<f64>,
}

fn sweep_rows(value: &str, s: &RunSummary) -> Vec<SweepRow> {
    let n = s.traces.len().max(1) as f64;
    let triples = s.traces.iter().map(|t| t.triples_found() as f64).sum::<f64>() / n;
    let r = &s.report;
    [
        ("rouge_l", Some(r.overall.rouge_l)),
        ("judge_rate", r.overall.judge_rate),
        ("exact_match_rate", Some(r.overall.exact_match_rate)),
        ("triples_found", Some(triples)),
        ("generation_calls", Some(r.costs.generation_calls)),
        ("llm_calls", Some(r.costs.llm_calls)),
        ("kg_ops", Some(r.costs.kg_ops)),
        ("explore_searches", Some(r.costs.explore_searches)),
    ]
    .into_iter()
    .map(|(metric, score)| SweepRow {
        value: value.to_string(),
        metric: metric.to_string(),
        score,
    })
    .collect()
}

/// One sub-run per value under `<out>/<axis>-<value>/`, plus a
/// long-format `<out>/sweep.table`.
pub fn run_sweep(base: &RunConfig, axis: SweepAxis, values: &[String]) -> Result<Vec<SweepRow>, RunError> {
    if values.is_empty() {
        return Err(RunError::Config("a sweep needs at least one value".into()));
    }
    let mut configs = Vec::new();
    for v in values {
        let mut cfg = base.clone();
        axis.apply(&mut cfg, v)?;
        cfg.out_dir = base.out_dir.join(format!("{}-{v}", axis.as_str()));
        cfg.validate()?;
        configs.push((v, cfg));
    }
    let mut rows = Vec::new();
    for (v, cfg) in configs {
        let summary = run_experiment(&cfg)?;
        rows.extend(sweep_rows(v, &summary));
    }
    let mut table = format!("# {SWEEP_SCHEMA}\naxis\tvalue\tmetric\tscore\n");
    for r in &rows {
        let score = r.score.map_or_else(|| "n/a".to_string(), |s| format!("{s}"));
        writeln!(table, "{}\t{}\t{}\t{score}", axis.as_str(), r.value, r.metric).unwrap();
    }
    let path = base.out_dir.join("sweep.table");
    fs::write(&path, table).map_err(io_err(&path))?;
    Ok(rows)
}
