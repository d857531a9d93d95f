//! ΔA in memory: align model importance with the hard oracle for every
//! example, reduce to a report and render the table. A positive control
//! (oracle = model importance) shows what a perfectly aligned model scores.
//!
//! `cargo run --release --example alignment_report`

use importance_alignment::alignment::{align_example, delta_a, render_markdown, DEFAULT_FISHER_EPSILON};
use importance_alignment::attribution::{model_importance, IgConfig};
use importance_alignment::corpus::StopWordList;
use importance_alignment::model::{train, TrainingConfig};
use importance_alignment::oracle::{hard_oracle, random_pairing, ExplanationRef, OracleKind, OracleVector, Scoring};
use importance_alignment::rng::{stream, Stream};
use importance_alignment::synthetic::{generate, SyntheticConfig};

pub fn run_example() -> anyhow::Result<()> {
    let seed = 0;
    let corpus = generate(&SyntheticConfig::default())?;
    let (model, _) = train(&corpus, &TrainingConfig::default())?;
    let pairing = random_pairing(&corpus, &mut stream(seed, Stream::RandomPairing))?;
    let stops = StopWordList::english();
    let ig = IgConfig { steps: 64, ..IgConfig::default() };

    let mut hard_records = Vec::new();
    let mut control_records = Vec::new();
    for e in corpus.with_explanations() {
        let other = corpus.get(&pairing[&e.id]).expect("paired id");
        let importance = model_importance(&model, e, &ig)?;
        let matched = hard_oracle(e, ExplanationRef::of(e), &stops)?;
        let random = hard_oracle(e, ExplanationRef::of(other), &stops)?;
        hard_records.push(align_example(&importance, &matched, &random, DEFAULT_FISHER_EPSILON)?);

        // the control's random side is the paired example's importance, cut or cycled to length
        let other_importance = model_importance(&model, other, &ig)?;
        let as_oracle = |v: Vec<f64>, scoring, explanation_id: &str| OracleVector {
            example_id: e.id.clone(),
            kind: OracleKind::Hard,
            scoring,
            explanation_id: explanation_id.to_string(),
            per_token: v,
        };
        let n = importance.per_token.len();
        let cycled: Vec<f64> = other_importance.per_token.iter().cycle().take(n).copied().collect();
        control_records.push(align_example(
            &importance,
            &as_oracle(importance.per_token.clone(), Scoring::Matched, &e.id),
            &as_oracle(cycled, Scoring::Random, &other.id),
            DEFAULT_FISHER_EPSILON,
        )?);
    }

    let hard = delta_a(&hard_records, "bag-of-embeddings", OracleKind::Hard, seed)?;
    let control = delta_a(&control_records, "positive-control", OracleKind::Hard, seed)?;
    println!("{}", render_markdown(&[hard.clone(), control.clone()]));
    println!(
        "hard: ΔA = {:.4}, t = {:?}, one-sided p = {:?}, skipped {}",
        hard.delta_a, hard.t_statistic, hard.p_one_sided, hard.n_skipped
    );
    println!("control: ΔA = {:.4} of at most {:.4}", control.delta_a, control.mean_c_matched.tanh());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
