//! Load the shipped corpus, tokenize one example and show which input tokens
//! the hard oracle would consider (stop words never count).
//!
//! `cargo run --example tokenize_corpus`

use std::path::Path;

use importance_alignment::corpus::{concat_input, load_corpus, CorpusSchema, StopWordList};

pub fn run_example() -> anyhow::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic_200.jsonl");
    let corpus = load_corpus(&path, CorpusSchema::Jsonl)?;
    println!("{}: {} examples, {} with explanations", corpus.name(), corpus.len(), corpus.with_explanations().count());

    let e = &corpus.examples()[0];
    let input = concat_input(e)?;
    let stops = StopWordList::english();
    println!("{} [{}]", e.id, e.gold_label.as_str());
    for (i, (tok, span)) in input.iter().zip(input.spans()).enumerate() {
        let note = if input.is_separator(i) {
            "separator"
        } else if stops.contains(tok) {
            "stop word"
        } else {
            ""
        };
        println!("  {i:>2} {tok:<10} {:>3}..{:<3} {note}", span.start, span.end);
    }
    println!("{} content tokens, explanation: {:?}", input.content_len(), e.explanation);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
