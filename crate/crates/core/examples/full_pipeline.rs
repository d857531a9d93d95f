//! The whole file-based pipeline (what `ialign run` does) into a temporary
//! directory: train, attribute, oracle, align, report.
//!
//! `cargo run --release --example full_pipeline`

use std::path::Path;

use importance_alignment::pipeline::{run, RunConfig};

pub fn run_example() -> anyhow::Result<()> {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic_200.jsonl");
    let out = tempfile::tempdir()?;
    let mut config = RunConfig::new(corpus, out.path());
    config.seed = 3;
    config.ig.steps = 64;

    let (outcome, summary) = run(&config)?;
    for w in &outcome.warnings {
        println!("warning: {w}");
    }
    println!("{} files written under {}", outcome.written.len(), out.path().display());
    print!("{}", summary.markdown);
    for row in &summary.agreement {
        println!(
            "{}-{} Spearman r = {:.3} over {} tokens (reference {:?})",
            row.first, row.second, row.spearman.r, row.n_tokens, row.reference_r
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
