//! Integrated gradients on a trained classifier: signed per-token
//! attributions, the completeness gap, and the |IG| model-importance vector.
//!
//! `cargo run --release --example integrated_gradients`

use importance_alignment::attribution::{integrated_gradients, model_importance, IgConfig};
use importance_alignment::corpus::concat_input;
use importance_alignment::model::{train, Architecture, TrainingConfig};
use importance_alignment::synthetic::{generate, SyntheticConfig};

pub fn run_example() -> anyhow::Result<()> {
    let corpus = generate(&SyntheticConfig::default())?;
    let config = TrainingConfig {
        architecture: Architecture::MeanEmbeddingMlp,
        learning_rate: 0.2,
        ..TrainingConfig::default()
    };
    let (model, _) = train(&corpus, &config)?;

    let e = &corpus.examples()[3];
    let tokens = concat_input(e)?;
    for steps in [8, 32, 256] {
        let ig = integrated_gradients(&model, &tokens, e.gold_label.index(), &IgConfig { steps, ..IgConfig::default() })?;
        println!("steps {steps:>3}: F(x) - F(x') = {:+.6}, completeness gap {:.2e}", ig.score_difference, ig.completeness_gap);
    }

    let importance = model_importance(&model, e, &IgConfig::default())?;
    let content = tokens.content_positions();
    println!("{} toward {:?}:", e.id, e.gold_label);
    for (&pos, score) in content.iter().zip(&importance.per_token) {
        println!("  {:<10} {score:.5}", tokens.tokens()[pos]);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
