use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ialign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ialign")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn shipped_corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic_200.jsonl")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

fn lines(p: &Path) -> usize {
    fs::read_to_string(p).unwrap().lines().filter(|l| !l.trim().is_empty()).count()
}

fn write_corpus(dir: &Path, rows: &[Value]) -> PathBuf {
    let path = dir.join("corpus.jsonl");
    let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
    fs::write(&path, text).unwrap();
    path
}

fn row(id: &str, label: &str, explanation: Option<&str>, prediction: Option<&str>) -> Value {
    let mut v = serde_json::json!({
        "id": id,
        "premise": "The tall pilot repairs a heavy boat near the old harbor.",
        "hypothesis": "The pilot indeed repairs the boat.",
        "label": label,
        "explanation": explanation,
    });
    if let Some(p) = prediction {
        v["model_prediction"] = p.into();
    }
    v
}

#[test]
fn missing_corpus_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = ialign(&["train", "--corpus", "/no/such/corpus.jsonl", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("/no/such/corpus.jsonl") && err.contains("Usage"), "{err}");
}

#[test]
fn unknown_flag_and_bad_baseline_exit_2() {
    assert_eq!(ialign(&["train", "--bogus"]).status.code(), Some(2));
    let corpus = shipped_corpus();
    let o = ialign(&["attribute", "--corpus", s(&corpus), "--out", "/tmp", "--baseline", "mean"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn informed_training_names_the_example_without_explanation() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(
        dir.path(),
        &[
            row("a", "entailment", Some("indeed the pilot repairs"), None),
            row("b", "neutral", None, None),
        ],
    );
    let o = ialign(&["train", "--corpus", s(&corpus), "--out", s(dir.path()), "--task", "informed"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("b"), "{}", stderr(&o));
}

#[test]
fn run_writes_every_artifact_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    fs::create_dir(&out).unwrap();
    let corpus = shipped_corpus();
    let args = ["run", "--corpus", s(&corpus), "--out", s(&out), "--seed", "5", "--steps", "16"];
    let first = ialign(&args);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let stdout = String::from_utf8_lossy(&first.stdout);
    assert!(stdout.contains("nli3way"), "{stdout}");

    let reports: Vec<PathBuf> = ["hard", "soft", "expert"].iter().map(|k| out.join(format!("reports/nli3way.{k}.json"))).collect();
    let bytes: Vec<Vec<u8>> = reports.iter().map(|p| fs::read(p).unwrap()).collect();
    for p in &reports {
        let r = read_json(p);
        assert!(r["delta_A"].is_f64());
        assert_eq!(r["seed"], 5);
        assert_eq!(r["run_config"]["seed"], 5);
    }
    assert_eq!(lines(&out.join("attributions/nli3way.jsonl")), 200);
    assert!(out.join("attributions/nli3way.jsonl.meta.json").is_file());
    assert!(out.join("reports/agreement.json").is_file());
    assert!(out.join("reports/table.csv").is_file());

    fs::remove_dir_all(&out).unwrap();
    fs::create_dir(&out).unwrap();
    let second = ialign(&args);
    assert_eq!(second.status.code(), Some(0));
    for (p, b) in reports.iter().zip(&bytes) {
        assert_eq!(&fs::read(p).unwrap(), b, "{}", p.display());
    }
}

#[test]
fn identity_pairing_gives_zero_delta() {
    let dir = tempfile::tempdir().unwrap();
    let o = ialign(&[
        "run",
        "--corpus",
        s(&shipped_corpus()),
        "--out",
        s(dir.path()),
        "--steps",
        "8",
        "--oracles",
        "hard,expert",
        "--debug-identity-pairing",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for k in ["hard", "expert"] {
        let r = read_json(&dir.path().join(format!("reports/nli3way.{k}.json")));
        assert_eq!(r["delta_A"], 0.0, "{k}");
    }
}

#[test]
fn empty_wrong_only_set_warns_then_align_fails() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<Value> = (0..6)
        .map(|i| {
            let label = ["entailment", "neutral", "contradiction"][i % 3];
            row(&format!("x{i}"), label, Some("The pilot indeed repairs the boat."), Some(label))
        })
        .collect();
    let corpus = write_corpus(dir.path(), &rows);
    let common = ["--corpus", s(&corpus), "--out", s(dir.path())];

    let t = ialign(&[&["train", "--task", "nli"][..], &common].concat());
    assert_eq!(t.status.code(), Some(0), "{}", stderr(&t));
    let a = ialign(&[&["attribute", "--wrong-only", "--steps", "4"][..], &common].concat());
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert!(stderr(&a).contains("warning:"));
    assert_eq!(lines(&dir.path().join("attributions/nli3way.jsonl")), 0);

    let o = ialign(&[&["oracle", "--oracles", "hard"][..], &common].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let al = ialign(&["align", "--out", s(dir.path())]);
    assert_eq!(al.status.code(), Some(1), "{}", stderr(&al));
}

#[test]
fn missing_expert_sidecar_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("lonely.jsonl");
    fs::copy(shipped_corpus(), &corpus).unwrap();
    let o = ialign(&["oracle", "--corpus", s(&corpus), "--out", s(dir.path()), "--oracles", "expert"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lonely.experts.jsonl"), "{}", stderr(&o));
}

#[test]
fn two_models_are_reported_and_compared() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = shipped_corpus();
    let mut models = Vec::new();
    for (name, seed) in [("alpha", "1"), ("beta", "2")] {
        let scratch = dir.path().join(name);
        fs::create_dir(&scratch).unwrap();
        let t = ialign(&["train", "--corpus", s(&corpus), "--out", s(&scratch), "--task", "nli", "--seed", seed]);
        assert_eq!(t.status.code(), Some(0), "{}", stderr(&t));
        let path = dir.path().join(format!("{name}.json"));
        fs::copy(scratch.join("models/nli3way.json"), &path).unwrap();
        models.push(path);
    }
    let out = dir.path().join("out");
    fs::create_dir(&out).unwrap();
    let common = ["--corpus", s(&corpus), "--out", s(&out)];
    let a = ialign(&[&["attribute", "--steps", "8", "--model", s(&models[0]), "--model", s(&models[1])][..], &common].concat());
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let o = ialign(&[&["oracle", "--oracles", "hard"][..], &common].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(ialign(&["align", "--out", s(&out)]).status.code(), Some(0));
    let r = ialign(&["report", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));

    for name in ["alpha", "beta"] {
        assert_eq!(read_json(&out.join(format!("reports/{name}.hard.json")))["model_id"], name);
    }
    let comparisons = read_json(&out.join("reports/comparisons.json"));
    assert!(comparisons.to_string().contains("alpha") && comparisons.to_string().contains("beta"));
}

#[test]
fn wrong_only_line_count_matches_recorded_errors() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = shipped_corpus();
    let wrong = fs::read_to_string(&corpus)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|v| v["model_prediction"] != v["label"])
        .count();
    assert!(wrong > 0);
    let common = ["--corpus", s(&corpus), "--out", s(dir.path())];
    assert_eq!(ialign(&[&["train", "--task", "nli"][..], &common].concat()).status.code(), Some(0));
    let a = ialign(&[&["attribute", "--wrong-only", "--steps", "4"][..], &common].concat());
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(lines(&dir.path().join("attributions/nli3way.jsonl")), wrong);
}

#[test]
fn training_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = shipped_corpus();
    let args = ["train", "--corpus", s(&corpus), "--out", s(dir.path()), "--seed", "3"];
    assert_eq!(ialign(&args).status.code(), Some(0));
    let first = fs::read(dir.path().join("models/informed6way.json")).unwrap();
    let first_nli = fs::read(dir.path().join("models/nli3way.json")).unwrap();
    assert_eq!(ialign(&args).status.code(), Some(0));
    assert_eq!(fs::read(dir.path().join("models/informed6way.json")).unwrap(), first);
    assert_eq!(fs::read(dir.path().join("models/nli3way.json")).unwrap(), first_nli);
}
