//! Writes the seeded synthetic corpus and its expert-vote sidecar.
//!
//! `cargo run --example generate_synthetic -- [DIR]` (default `data/`).

use std::path::{Path, PathBuf};

use importance_alignment::io::write_atomic;
use importance_alignment::synthetic::shipped_files;

pub fn run_example(dir: &Path) -> anyhow::Result<()> {
    let (corpus, experts) = shipped_files()?;
    write_atomic(&dir.join("synthetic_200.jsonl"), &corpus)?;
    write_atomic(&dir.join("synthetic_200.experts.jsonl"), &experts)?;
    println!("wrote {} and {}", dir.join("synthetic_200.jsonl").display(), dir.join("synthetic_200.experts.jsonl").display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"));
    run_example(&dir)
}
