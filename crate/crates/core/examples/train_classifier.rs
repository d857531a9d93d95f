//! Train the 3-way classifier and the 6-way explanation-informed classifier on
//! the synthetic corpus, then check that a checkpoint round-trips bitwise.
//!
//! `cargo run --release --example train_classifier`

use importance_alignment::model::{accuracy, evaluate_six_way, train, Classifier, Task, TrainingConfig};
use importance_alignment::synthetic::{generate, SyntheticConfig};

pub fn run_example() -> anyhow::Result<()> {
    let corpus = generate(&SyntheticConfig { examples: 200, seed: 0, ..Default::default() })?;
    let held_out = generate(&SyntheticConfig { examples: 100, seed: 1, ..Default::default() })?;

    let (nli, metrics) = train(&corpus, &TrainingConfig::default())?;
    for m in &metrics.epochs {
        println!("3-way epoch {}: loss {:.4}, train accuracy {:.3}", m.epoch, m.mean_loss, m.train_accuracy);
    }
    println!("3-way held-out accuracy {:.3}", accuracy(&nli, &held_out, Task::Nli3Way, 0)?);

    let (informed, _) = train(&corpus, &TrainingConfig::informed_default())?;
    let eval = evaluate_six_way(&informed, &held_out, 0)?;
    println!(
        "6-way held-out: joint {:.3}, nli {:.3}, matched/mismatched {:.3}",
        eval.joint_accuracy, eval.nli_accuracy, eval.matched_accuracy
    );

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("nli3way.json");
    nli.save(&path)?;
    let reloaded = Classifier::load(&path)?;
    assert_eq!(reloaded.to_json_bytes()?, nli.to_json_bytes()?);
    println!("checkpoint round-trip is bitwise identical ({} bytes)", std::fs::metadata(&path)?.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
