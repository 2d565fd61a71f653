//! Scores answers with Rouge-L, labels them with a replayed judge and
//! aggregates a report by domain and difficulty.
//!
//! cargo run --example rouge_eval

use kgthought::agent::Termination;
use kgthought::cost::{CostCounters, Meter};
use kgthought::eval::{aggregate, rouge_l, Difficulty, EvalResult, Judge, Question, RunOutcome};
use kgthought::llm::{Gateway, PromptRegistry, ReplayScript};

fn main() -> anyhow::Result<()> {
    println!(
        "rouge_l(\"head\", \"head, skin of body\") = {}",
        rouge_l("head", "head, skin of body")
    );

    let judge_script = ReplayScript::from_pairs(
        [
            (
                "(?s)^You are given.*Model answer: (head, skin of body|skin of body and head)\n",
                "[Yes]",
            ),
            ("^You are given", "[No]"),
            ("(?s)^A model answered.*Evidence:\n.*skin of body", "[2]"),
            ("^A model answered", "[3]"),
        ],
        false,
    )?;
    let meter = Meter::new(false);
    let prompts = PromptRegistry::default();
    let judge = Judge::new(Gateway::new(&judge_script, &meter), &prompts);

    let gold = "head, skin of body";
    let runs = [
        (
            "bio-1",
            "biomedical",
            Difficulty::Easy,
            Some("skin of body and head"),
            Termination::Finished,
            vec![],
        ),
        (
            "bio-2",
            "biomedical",
            Difficulty::Medium,
            Some("liver"),
            Termination::Finished,
            vec!["KRT39 --> expressed-in --> skin of body".to_string()],
        ),
        (
            "lit-1",
            "literature",
            Difficulty::Hard,
            Some("liver"),
            Termination::Finished,
            vec![],
        ),
        (
            "lit-2",
            "literature",
            Difficulty::Easy,
            None,
            Termination::StepLimit,
            vec![],
        ),
    ];
    let mut results = Vec::new();
    for (qid, domain, difficulty, answer, termination, evidence) in &runs {
        let q = Question::new(*qid, "What anatomy can be expressed by gene KRT39?", gold)
            .with_domain(*domain)
            .with_difficulty(*difficulty);
        let mut r = EvalResult::score(&q, *answer);
        r.judge_correct = match answer {
            Some(a) => judge.judge_correct(&q, a)?,
            None => Some(false),
        };
        let outcome = RunOutcome {
            answer: *answer,
            termination: *termination,
            judge_correct: r.judge_correct,
            evidence,
        };
        r.error_class = Some(judge.classify_error(&q, &outcome)?);
        println!(
            "{qid}: rouge {:?} judged {:?} -> {:?}",
            r.rouge_l, r.judge_correct, r.error_class
        );
        results.push(r);
    }

    let report = aggregate(&results, &vec![CostCounters::default(); results.len()]);
    println!(
        "\noverall rouge {:.3}, judge rate {:?}",
        report.overall.rouge_l, report.overall.judge_rate
    );
    for (domain, stats) in &report.by_domain {
        println!("  {domain}: rouge {:.3} over {}", stats.rouge_l, stats.count);
    }
    println!("error distribution: {:?}", report.error_distribution);
    println!("judge calls: {:?}", meter.snapshot().llm_calls_by_tag);
    Ok(())
}
