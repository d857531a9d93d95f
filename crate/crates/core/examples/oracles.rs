//! The three oracles for one example, scored with its own explanation and
//! with the explanation it is randomly paired with.
//!
//! `cargo run --release --example oracles`

use std::path::Path;

use importance_alignment::attribution::IgConfig;
use importance_alignment::corpus::{concat_input, load_corpus, CorpusSchema, StopWordList};
use importance_alignment::model::{train, TrainingConfig};
use importance_alignment::oracle::{
    expert_baseline, expert_oracle, hard_oracle, load_expert_annotations, random_pairing, soft_oracle,
    ExplanationRef,
};
use importance_alignment::rng::{stream, Stream};

pub fn run_example() -> anyhow::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let corpus = load_corpus(&data.join("synthetic_200.jsonl"), CorpusSchema::Jsonl)?;
    let experts = load_expert_annotations(&data.join("synthetic_200.experts.jsonl"), &corpus)?;
    let pairing = random_pairing(&corpus, &mut stream(0, Stream::RandomPairing))?;
    let (informed, _) = train(&corpus, &TrainingConfig::informed_default())?;
    let stops = StopWordList::english();

    let e = &corpus.examples()[0];
    let other = corpus.get(&pairing[&e.id]).expect("pairing targets are corpus ids");
    println!("{}: {:?}", e.id, e.explanation);
    println!("paired with {}: {:?}", other.id, other.explanation);

    let hard = hard_oracle(e, ExplanationRef::of(e), &stops)?;
    let hard_random = hard_oracle(e, ExplanationRef::of(other), &stops)?;
    let soft = soft_oracle(&informed, e, ExplanationRef::of(e), &IgConfig::default(), true)?;
    let soft_random = soft_oracle(&informed, e, ExplanationRef::of(other), &IgConfig::default(), true)?;
    let set = &experts[&e.id];
    let expert = expert_oracle(set)?;
    let expert_random = expert_baseline(set, &other.id, &mut stream(0, Stream::ExpertBaselineShuffle))?;

    let tokens = concat_input(e)?;
    println!("{:<10} {:>4} {:>4} {:>8} {:>8} {:>6} {:>6}", "token", "hard", "rand", "soft", "rand", "expert", "rand");
    for (k, &pos) in tokens.content_positions().iter().enumerate() {
        println!(
            "{:<10} {:>4} {:>4} {:>8.5} {:>8.5} {:>6.3} {:>6.3}",
            tokens.tokens()[pos],
            hard.per_token[k],
            hard_random.per_token[k],
            soft.per_token[k],
            soft_random.per_token[k],
            expert.per_token[k],
            expert_random.per_token[k],
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
