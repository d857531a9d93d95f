//! Every runnable example, executed as a test.

macro_rules! example {
    ($module:ident, $file:literal) => {
        #[allow(dead_code)]
        #[path = $file]
        mod $module;
    };
}

example!(tokenize_corpus, "../examples/tokenize_corpus.rs");
example!(train_classifier, "../examples/train_classifier.rs");
example!(integrated_gradients, "../examples/integrated_gradients.rs");
example!(oracles, "../examples/oracles.rs");
example!(alignment_report, "../examples/alignment_report.rs");
example!(full_pipeline, "../examples/full_pipeline.rs");
example!(generate_synthetic, "../examples/generate_synthetic.rs");

#[test]
fn tokenize_corpus_runs() {
    tokenize_corpus::run_example().unwrap();
}

#[test]
fn train_classifier_runs() {
    train_classifier::run_example().unwrap();
}

#[test]
fn integrated_gradients_runs() {
    integrated_gradients::run_example().unwrap();
}

#[test]
fn oracles_runs() {
    oracles::run_example().unwrap();
}

#[test]
fn alignment_report_runs() {
    alignment_report::run_example().unwrap();
}

#[test]
fn full_pipeline_runs() {
    full_pipeline::run_example().unwrap();
}

#[test]
fn shipped_data_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic::run_example(dir.path()).unwrap();
    let data = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    for name in ["synthetic_200.jsonl", "synthetic_200.experts.jsonl"] {
        let fresh = std::fs::read(dir.path().join(name)).unwrap();
        let shipped = std::fs::read(data.join(name)).unwrap();
        assert!(fresh == shipped, "{name} differs from the generator output; rerun the generate_synthetic example");
    }
}
