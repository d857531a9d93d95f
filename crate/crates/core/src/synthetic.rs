//! Seeded synthetic NLI corpora with explanations.
//!
//! The label is carried by one marker word in the hypothesis ("indeed",
//! "never", "perhaps"), so a bag-of-embeddings classifier can reach perfect
//! accuracy. Every explanation is a verbatim copy of its hypothesis, which
//! gives the explanation-informed model a token-repetition signal for telling
//! matched from mismatched explanations.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::Serialize;

use crate::corpus::{concat_input, Corpus, Example, Label};
use crate::error::Result;
use crate::oracle::{ExpertAnnotationLine, ExpertAnnotationSet};
use crate::rng::{self, Stream};

const ADJECTIVES: &[&str] = &["young", "tall", "quiet", "clever", "tired", "cheerful", "brave", "sleepy"];
const SUBJECTS: &[&str] = &[
    "farmer", "pilot", "painter", "doctor", "sailor", "baker", "teacher", "miner", "dancer", "poet",
    "hunter", "judge",
];
const VERBS: &[&str] = &["carries", "paints", "repairs", "sells", "washes", "guards", "studies", "buys"];
const OBJECTS: &[&str] = &[
    "boat", "fence", "lantern", "basket", "wagon", "violin", "kettle", "ladder", "saddle", "mirror",
    "anchor", "barrel",
];
const PLACES: &[&str] = &["harbor", "market", "garden", "station", "bridge", "village", "meadow", "castle"];
const ONLOOKERS: &[&str] = &["child", "neighbor", "stranger", "dog", "crowd", "guard"];

fn marker(label: Label) -> &'static str {
    match label {
        Label::Entailment => "indeed",
        Label::Contradiction => "never",
        Label::Neutral => "perhaps",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SyntheticConfig {
    pub examples: usize,
    pub seed: u64,
    /// Fraction of examples that get a recorded (wrong) `model_prediction`;
    /// the rest get the gold label as prediction. `None` records no predictions.
    pub wrong_prediction_rate: Option<f64>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            examples: 200,
            seed: 0,
            wrong_prediction_rate: None,
        }
    }
}

pub fn generate(config: &SyntheticConfig) -> Result<Corpus> {
    let mut rng = rng::stream(config.seed, Stream::Synthetic);
    let mut examples = Vec::with_capacity(config.examples);
    for i in 0..config.examples {
        let label = Label::ALL[rng.random_range(0..3)];
        let pick = |rng: &mut _, words: &[&'static str]| *words.choose(rng).expect("non-empty word list");
        let adj = pick(&mut rng, ADJECTIVES);
        let subj = pick(&mut rng, SUBJECTS);
        let verb = pick(&mut rng, VERBS);
        let obj = pick(&mut rng, OBJECTS);
        let place = pick(&mut rng, PLACES);
        let onlooker = pick(&mut rng, ONLOOKERS);

        let premise = format!(
            "The {adj} {subj} {verb} a heavy {obj} near the old {place} while a {onlooker} watches."
        );
        let hypothesis = match label {
            Label::Entailment => format!("The {subj} {} {verb} the {obj}.", marker(label)),
            Label::Contradiction => format!("The {subj} {} {verb} any {obj}.", marker(label)),
            Label::Neutral => format!("The {subj} {} {verb} the {obj} for money.", marker(label)),
        };
        let model_prediction = match config.wrong_prediction_rate {
            None => None,
            Some(rate) if rng.random_bool(rate.clamp(0.0, 1.0)) => {
                Some(Label::ALL[(label.index() + rng.random_range(1..3)) % 3])
            }
            Some(_) => Some(label),
        };
        examples.push(Example {
            id: format!("syn{i:05}"),
            premise,
            explanation: hypothesis.clone(),
            hypothesis,
            gold_label: label,
            model_prediction,
        });
    }
    Corpus::new(format!("synthetic-{}-seed{}", config.examples, config.seed), examples)
}

/// The corpus shipped as `data/synthetic_200.jsonl`.
pub fn shipped_config() -> SyntheticConfig {
    SyntheticConfig {
        examples: 200,
        seed: 0,
        wrong_prediction_rate: Some(0.3),
    }
}

/// Expert votes shipped as `data/synthetic_200.experts.jsonl`: the first 60
/// examples, three annotators, 10% vote noise.
pub fn shipped_expert_annotations(corpus: &Corpus) -> Result<Vec<ExpertAnnotationSet>> {
    expert_annotations(corpus, 60, 3, 0.1, 0)
}

/// Bytes of the shipped corpus and expert files, in that order.
pub fn shipped_files() -> Result<(Vec<u8>, Vec<u8>)> {
    let corpus = generate(&shipped_config())?;
    let mut corpus_bytes = Vec::new();
    corpus.write_jsonl(&mut corpus_bytes)?;
    let experts = expert_annotation_lines(&shipped_expert_annotations(&corpus)?);
    Ok((corpus_bytes, crate::io::to_jsonl(&experts)?))
}

/// Simulated expert votes for the first `count` examples with explanations.
///
/// Each annotator marks content words that occur in the explanation, and
/// with probability `noise` flips any individual vote.
pub fn expert_annotations(
    corpus: &Corpus,
    count: usize,
    annotators: usize,
    noise: f64,
    seed: u64,
) -> Result<Vec<ExpertAnnotationSet>> {
    let stops = crate::corpus::StopWordList::english();
    let mut rng = rng::stream(seed, Stream::Synthetic);
    let mut out = Vec::new();
    for e in corpus.with_explanations().take(count) {
        let input = concat_input(e)?;
        let truth = crate::oracle::overlap(&input, &e.explanation_tokens(), &stops)?;
        let mut votes = Vec::with_capacity(annotators);
        for _ in 0..annotators {
            votes.push(
                truth
                    .iter()
                    .map(|&t| {
                        let v = t == 1.0;
                        u8::from(if rng.random_bool(noise) { !v } else { v })
                    })
                    .collect(),
            );
        }
        out.push(ExpertAnnotationSet {
            example_id: e.id.clone(),
            annotator_ids: (0..annotators).map(|k| format!("expert{}", k + 1)).collect(),
            annotators: votes,
        });
    }
    Ok(out)
}

/// JSONL lines in the expert-annotation sidecar format.
pub fn expert_annotation_lines(sets: &[ExpertAnnotationSet]) -> Vec<ExpertAnnotationLine> {
    let mut lines = Vec::new();
    for s in sets {
        for (who, votes) in s.annotator_ids.iter().zip(&s.annotators) {
            lines.push(ExpertAnnotationLine {
                id: s.example_id.clone(),
                annotator: who.clone(),
                important: votes.clone(),
            });
        }
    }
    lines
}
