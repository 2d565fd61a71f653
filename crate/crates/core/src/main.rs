use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use kgthought::eval::{questions_to_lines, synthetic_questions};
use kgthought::kg::{generate_synthetic_graph, save_graph, SyntheticSpec};
use kgthought::runner::{
    run_experiment, run_sweep, score_traces, validate_traces, BackendSpec, JudgeMode, RunConfig, SweepAxis,
};
use kgthought::search::{Evaluator, Interaction, Strategy};

#[derive(Parser)]
#[command(
    name = "kgthought",
    version,
    about = "Question answering over knowledge graphs with structured reasoning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer every question in a file and write traces, results and a report.
    Run(RunArgs),
    /// Repeat a run for each value of one parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated values, e.g. `1,2,3` or `select,score`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Check trace files against the structural invariants.
    ValidateTrace {
        /// A trace file, a run directory or a traces directory.
        path: PathBuf,
    },
    /// Recompute results and report from existing traces.
    Score {
        /// A run directory or its traces directory.
        dir: PathBuf,
        /// Where to write results and report; defaults to `dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a seeded synthetic graph and, optionally, questions over it.
    GenGraph {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        nodes: usize,
        #[arg(long, default_value_t = 2)]
        edges_per_node: usize,
        #[arg(long, value_delimiter = ',')]
        node_types: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        relations: Option<Vec<String>>,
        #[arg(long)]
        out: PathBuf,
        /// Also write this many synthetic questions to `--questions-out`.
        #[arg(long, default_value_t = 0)]
        questions: usize,
        #[arg(long)]
        questions_out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Cot,
    Tot,
    Got,
}

#[derive(Clone, Copy, ValueEnum)]
enum InteractionArg {
    Agent,
    Explore,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvaluatorArg {
    Select,
    Score,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Wire,
    Replay,
}

#[derive(Clone, Copy, ValueEnum)]
enum JudgeArg {
    None,
    Llm,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Steps,
    Depth,
    Width,
    Evaluator,
}

#[derive(Args)]
struct RunArgs {
    /// Line-delimited node file.
    #[arg(long)]
    kg: PathBuf,
    /// Line-delimited question file.
    #[arg(long)]
    questions: PathBuf,
    #[arg(long, value_enum, default_value = "cot")]
    strategy: StrategyArg,
    #[arg(long, value_enum, default_value = "agent")]
    interaction: InteractionArg,
    #[arg(long, value_enum, default_value = "select")]
    evaluator: EvaluatorArg,
    /// Step budget for chains.
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Children per state (k).
    #[arg(long, default_value_t = 3)]
    branching: usize,
    /// States kept per round (t).
    #[arg(long, default_value_t = 3)]
    retain: usize,
    /// Rounds for tree and graph search.
    #[arg(long, default_value_t = 10)]
    max_depth: usize,
    /// Exploration depth per search.
    #[arg(long, default_value_t = 3)]
    search_depth: usize,
    #[arg(long, default_value_t = 3)]
    max_relations: usize,
    #[arg(long, default_value_t = 5)]
    max_neighbors: usize,
    #[arg(long, default_value_t = 1)]
    score_votes: usize,
    #[arg(long, default_value_t = 0.7)]
    temperature: f64,
    #[arg(long, value_enum, default_value = "replay")]
    backend: BackendArg,
    /// Chat-completions URL for the wire backend.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Replay script for the replay backend.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Consume replay entries strictly in order.
    #[arg(long)]
    strict_replay: bool,
    #[arg(long, value_enum, default_value = "none")]
    judge: JudgeArg,
    /// Replay script answering judge prompts.
    #[arg(long)]
    judge_replay: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    /// Add reverse edges under this relation prefix, e.g. `inverse:`.
    #[arg(long)]
    inverse_relations: Option<String>,
    /// Few-shot example directory, `<dir>/<domain>/<template>.txt`.
    #[arg(long)]
    assets: Option<PathBuf>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let backend = match self.backend {
            BackendArg::Replay => BackendSpec::Replay {
                path: self.replay.context("--replay is required with the replay backend")?,
                strict: self.strict_replay,
            },
            BackendArg::Wire => BackendSpec::Wire {
                endpoint: self.endpoint.context("--endpoint is required with the wire backend")?,
                model: self.model.context("--model is required with the wire backend")?,
            },
        };
        let mut cfg = RunConfig::new(self.kg, self.questions, backend, self.out);
        cfg.strategy = match self.strategy {
            StrategyArg::Cot => Strategy::Cot,
            StrategyArg::Tot => Strategy::Tot,
            StrategyArg::Got => Strategy::Got,
        };
        cfg.interaction = match self.interaction {
            InteractionArg::Agent => Interaction::Agent,
            InteractionArg::Explore => Interaction::Explore,
        };
        cfg.evaluator = match self.evaluator {
            EvaluatorArg::Select => Evaluator::Select,
            EvaluatorArg::Score => Evaluator::Score,
        };
        cfg.n = self.steps;
        cfg.k = self.branching;
        cfg.t = self.retain;
        cfg.d_max = self.max_depth;
        cfg.search_depth = self.search_depth;
        cfg.max_relations_per_entity = self.max_relations;
        cfg.max_neighbors_per_relation = self.max_neighbors;
        cfg.score_votes = self.score_votes;
        cfg.thought_temperature = self.temperature;
        cfg.judge = match self.judge {
            JudgeArg::None => JudgeMode::None,
            JudgeArg::Llm => JudgeMode::Llm,
        };
        cfg.judge_replay = self.judge_replay;
        cfg.seed = self.seed;
        cfg.concurrency = self.concurrency;
        cfg.inverse_prefix = self.inverse_relations;
        cfg.assets_dir = self.assets;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.into_config()?;
            let summary = run_experiment(&cfg)?;
            let failed = summary.traces.iter().filter(|t| t.error.is_some()).count();
            println!(
                "{}: {} questions, mean R-L {:.3}, {} failed; wrote {}",
                summary.method(),
                summary.traces.len(),
                summary.report.overall.rouge_l,
                failed,
                cfg.out_dir.display()
            );
            Ok(true)
        }
        Command::Sweep { run, axis, values } => {
            let cfg = run.into_config()?;
            let axis = match axis {
                AxisArg::Steps => SweepAxis::Steps,
                AxisArg::Depth => SweepAxis::Depth,
                AxisArg::Width => SweepAxis::Width,
                AxisArg::Evaluator => SweepAxis::Evaluator,
            };
            let rows = run_sweep(&cfg, axis, &values)?;
            println!(
                "{} sweep rows written to {}",
                rows.len(),
                cfg.out_dir.join("sweep.table").display()
            );
            Ok(true)
        }
        Command::ValidateTrace { path } => {
            let mut clean = true;
            for (file, violations) in validate_traces(&path)? {
                if violations.is_empty() {
                    println!("ok   {}", file.display());
                } else {
                    clean = false;
                    for v in violations {
                        println!("FAIL {}: {v}", file.display());
                    }
                }
            }
            Ok(clean)
        }
        Command::Score { dir, out } => {
            let dest = out.unwrap_or_else(|| dir.clone());
            let summary = score_traces(&dir, &dest)?;
            println!("re-scored {} traces into {}", summary.traces.len(), dest.display());
            Ok(true)
        }
        Command::GenGraph {
            seed,
            nodes,
            edges_per_node,
            node_types,
            relations,
            out,
            questions,
            questions_out,
        } => {
            let mut spec = SyntheticSpec {
                nodes,
                edges_per_node,
                ..SyntheticSpec::default()
            };
            if let Some(t) = node_types {
                spec.node_types = t;
            }
            if let Some(r) = relations {
                spec.relations = r;
            }
            let graph = generate_synthetic_graph(seed, &spec)?;
            save_graph(&graph, &out)?;
            println!("wrote {} nodes to {}", graph.stats().node_count, out.display());
            if questions > 0 {
                let Some(qpath) = questions_out else {
                    bail!("--questions-out is required with --questions");
                };
                let qs = synthetic_questions(&graph, questions, seed);
                fs::write(&qpath, questions_to_lines(&qs)).with_context(|| format!("writing {}", qpath.display()))?;
                println!("wrote {} questions to {}", qs.len(), qpath.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
