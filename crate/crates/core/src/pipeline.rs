//! File-level orchestration: train, attribute, oracle, align, report.
//!
//! Every stage reads and writes under one output directory:
//!
//! ```text
//! models/nli3way.json, models/informed6way.json, models/training_metrics.json
//! attributions/<model_id>.jsonl   (+ .meta.json)
//! oracles/pairing.json, oracles/<kind>.jsonl   (+ .meta.json)
//! alignment/<model_id>.<kind>.jsonl   (+ .meta.json)
//! reports/<model_id>.<kind>.json, reports/table.md, reports/table.csv
//! reports/agreement.json, reports/comparisons.json
//! ```
//!
//! JSON artifacts embed the [`RunConfig`] that produced them; JSONL artifacts
//! carry it in a `.meta.json` sidecar so the line format stays fixed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alignment::{
    align_example, compare_models, delta_a, oracle_agreement, render_csv, render_markdown,
    AgreementRow, AlignmentRecord, AlignmentReport, ModelComparison, DEFAULT_FISHER_EPSILON,
};
use crate::attribution::{model_importance, AttributionVector, IgConfig};
use crate::corpus::{concat_input, load_corpus, Corpus, CorpusSchema, Example, StopWordList};
use crate::error::{Error, Result};
use crate::io;
use crate::model::{train_with_dev, Architecture, Classifier, Task, TrainingConfig, TrainingMetrics};
use crate::oracle::{
    expert_baseline, expert_oracle, hard_oracle, load_expert_annotations, random_pairing,
    soft_oracle, ExplanationRef, OracleKind, OracleVector, Scoring,
};
use crate::rng::{self, Stream};

pub const NLI_CHECKPOINT: &str = "nli3way.json";
pub const INFORMED_CHECKPOINT: &str = "informed6way.json";

/// Everything that determines a run's outputs besides the input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus_path: PathBuf,
    pub dev_corpus_path: Option<PathBuf>,
    /// 3-way checkpoints to attribute. Empty means `models/nli3way.json`.
    pub model_paths: Vec<PathBuf>,
    /// 6-way checkpoint for the soft oracle. `None` means `models/informed6way.json`.
    pub informed_model_path: Option<PathBuf>,
    pub tasks: Vec<Task>,
    /// 3-way hyperparameters; `seed` and `task` are overridden by the run.
    pub training: TrainingConfig,
    /// 6-way hyperparameters; `seed` and `task` are overridden by the run.
    pub informed_training: TrainingConfig,
    pub oracles: Vec<OracleKind>,
    pub ig: IgConfig,
    pub seed: u64,
    pub wrong_only: bool,
    pub stopwords_path: Option<PathBuf>,
    /// Expert sidecar. `None` means `<corpus stem>.experts.jsonl` next to the corpus.
    pub experts_path: Option<PathBuf>,
    /// IG target of the soft oracle is `(gold, matched = soft_target_matched)`
    /// for both matched and random scoring.
    pub soft_target_matched: bool,
    /// Debug: pair every example with its own explanation, which forces ΔA = 0.
    pub identity_pairing: bool,
    pub fisher_epsilon: f64,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn new(corpus_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            corpus_path: corpus_path.into(),
            dev_corpus_path: None,
            model_paths: Vec::new(),
            informed_model_path: None,
            tasks: vec![Task::Nli3Way, Task::ExplanationInformed6Way],
            training: TrainingConfig::default(),
            informed_training: TrainingConfig::informed_default(),
            oracles: OracleKind::ALL.to_vec(),
            ig: IgConfig::default(),
            seed: 0,
            wrong_only: false,
            stopwords_path: None,
            experts_path: None,
            soft_target_matched: true,
            identity_pairing: false,
            fisher_epsilon: DEFAULT_FISHER_EPSILON,
            output_dir: output_dir.into(),
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.output_dir)
    }

    pub fn resolved_model_paths(&self) -> Vec<PathBuf> {
        if self.model_paths.is_empty() {
            vec![self.layout().checkpoint(Task::Nli3Way)]
        } else {
            self.model_paths.clone()
        }
    }

    pub fn resolved_informed_path(&self) -> PathBuf {
        self.informed_model_path
            .clone()
            .unwrap_or_else(|| self.layout().checkpoint(Task::ExplanationInformed6Way))
    }

    pub fn resolved_experts_path(&self) -> PathBuf {
        self.experts_path
            .clone()
            .unwrap_or_else(|| default_experts_path(&self.corpus_path))
    }

    fn stopwords(&self) -> Result<StopWordList> {
        match &self.stopwords_path {
            Some(p) => StopWordList::from_file(p),
            None => Ok(StopWordList::english()),
        }
    }

    fn corpus(&self) -> Result<Corpus> {
        load_corpus(&self.corpus_path, CorpusSchema::Jsonl)
    }
}

/// `data/x.jsonl` -> `data/x.experts.jsonl`
pub fn default_experts_path(corpus_path: &Path) -> PathBuf {
    let stem = corpus_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    corpus_path.with_file_name(format!("{stem}.experts.jsonl"))
}

/// Model id of a checkpoint: its file stem.
pub fn model_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn checkpoint(&self, task: Task) -> PathBuf {
        let name = match task {
            Task::Nli3Way => NLI_CHECKPOINT,
            Task::ExplanationInformed6Way => INFORMED_CHECKPOINT,
        };
        self.root.join("models").join(name)
    }

    pub fn training_metrics(&self) -> PathBuf {
        self.root.join("models/training_metrics.json")
    }

    pub fn attributions(&self, model_id: &str) -> PathBuf {
        self.root.join("attributions").join(format!("{model_id}.jsonl"))
    }

    pub fn pairing(&self) -> PathBuf {
        self.root.join("oracles/pairing.json")
    }

    pub fn oracle(&self, kind: OracleKind) -> PathBuf {
        self.root.join("oracles").join(format!("{kind}.jsonl"))
    }

    pub fn records(&self, model_id: &str, kind: OracleKind) -> PathBuf {
        self.root.join("alignment").join(format!("{model_id}.{kind}.jsonl"))
    }

    pub fn report(&self, model_id: &str, kind: OracleKind) -> PathBuf {
        self.root.join("reports").join(format!("{model_id}.{kind}.json"))
    }

    pub fn table_markdown(&self) -> PathBuf {
        self.root.join("reports/table.md")
    }

    pub fn table_csv(&self) -> PathBuf {
        self.root.join("reports/table.csv")
    }

    pub fn agreement(&self) -> PathBuf {
        self.root.join("reports/agreement.json")
    }

    pub fn comparisons(&self) -> PathBuf {
        self.root.join("reports/comparisons.json")
    }
}

/// `foo.jsonl` -> `foo.jsonl.meta.json`
pub fn meta_path(jsonl: &Path) -> PathBuf {
    let mut name = jsonl.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    jsonl.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonlMeta {
    pub run_config: RunConfig,
    pub seed: u64,
    pub lines: usize,
}

fn write_jsonl_with_meta<T: Serialize>(path: &Path, items: &[T], config: &RunConfig) -> Result<()> {
    io::write_jsonl(path, items)?;
    io::write_json(
        &meta_path(path),
        &JsonlMeta {
            run_config: config.clone(),
            seed: config.seed,
            lines: items.len(),
        },
    )
}

/// Files written and non-fatal warnings from one stage.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn extend(&mut self, other: Outcome) {
        self.written.extend(other.written);
        self.warnings.extend(other.warnings);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetricsFile {
    pub run_config: RunConfig,
    pub seed: u64,
    pub tasks: BTreeMap<String, TaskMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub checkpoint: PathBuf,
    pub architecture: Architecture,
    pub metrics: TrainingMetrics,
}

fn task_name(task: Task) -> &'static str {
    match task {
        Task::Nli3Way => "nli_3way",
        Task::ExplanationInformed6Way => "explanation_informed_6way",
    }
}

pub fn train(config: &RunConfig) -> Result<Outcome> {
    if config.tasks.is_empty() {
        return Err(Error::Validation("no training task selected".into()));
    }
    let corpus = config.corpus()?;
    let dev = match &config.dev_corpus_path {
        Some(p) => Some(load_corpus(p, CorpusSchema::Jsonl)?),
        None => None,
    };
    let layout = config.layout();
    let mut out = Outcome::default();
    let mut tasks = BTreeMap::new();
    for &task in &config.tasks {
        let base = match task {
            Task::Nli3Way => &config.training,
            Task::ExplanationInformed6Way => &config.informed_training,
        };
        let tc = TrainingConfig {
            seed: config.seed,
            task,
            ..base.clone()
        };
        let (model, metrics) = train_with_dev(&corpus, dev.as_ref(), &tc)?;
        let path = layout.checkpoint(task);
        model.save(&path)?;
        out.written.push(path.clone());
        tasks.insert(
            task_name(task).to_string(),
            TaskMetrics {
                checkpoint: path,
                architecture: tc.architecture,
                metrics,
            },
        );
    }
    let metrics_path = layout.training_metrics();
    io::write_json(
        &metrics_path,
        &TrainingMetricsFile {
            run_config: config.clone(),
            seed: config.seed,
            tasks,
        },
    )?;
    out.written.push(metrics_path);
    Ok(out)
}

/// Examples that get attributed: those with an explanation and, under
/// `wrong_only`, a wrong prediction. A recorded `model_prediction` wins over
/// the classifier's own prediction.
pub fn eligible_examples<'a>(
    corpus: &'a Corpus,
    model: &Classifier,
    wrong_only: bool,
) -> Result<Vec<&'a Example>> {
    let mut out = Vec::new();
    for e in corpus.with_explanations() {
        if wrong_only {
            let wrong = match e.recorded_wrong() {
                Some(w) => w,
                None => model.predict_label(e)? != e.gold_label,
            };
            if !wrong {
                continue;
            }
        }
        out.push(e);
    }
    Ok(out)
}

fn oov_warning(model: &Classifier, e: &Example) -> Result<Option<String>> {
    let tokens = concat_input(e)?;
    let content = tokens.content_positions();
    let oov = content
        .iter()
        .filter(|&&i| !model.embedding().contains(&tokens.tokens()[i]))
        .count();
    Ok((oov > 0).then(|| {
        format!(
            "{}: {oov} of {} tokens are out of vocabulary and use the unknown embedding",
            e.id,
            content.len()
        )
    }))
}

pub fn attribute(config: &RunConfig) -> Result<Outcome> {
    let corpus = config.corpus()?;
    let layout = config.layout();
    let mut out = Outcome::default();
    for path in config.resolved_model_paths() {
        let model = Classifier::load(&path)?;
        let id = model_id(&path);
        let eligible = eligible_examples(&corpus, &model, config.wrong_only)?;
        if eligible.is_empty() {
            out.warnings.push(format!(
                "{id}: no eligible examples{}; writing an empty attribution file",
                if config.wrong_only { " after the wrong-only filter" } else { "" }
            ));
        }
        let mut vectors: Vec<AttributionVector> = Vec::with_capacity(eligible.len());
        for e in eligible {
            if let Some(w) = oov_warning(&model, e)? {
                out.warnings.push(format!("{id}: {w}"));
            }
            vectors.push(model_importance(&model, e, &config.ig)?);
        }
        let file = layout.attributions(&id);
        write_jsonl_with_meta(&file, &vectors, config)?;
        out.written.push(file);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingFile {
    pub run_config: RunConfig,
    pub seed: u64,
    /// example id -> id of the example whose explanation is its random pairing
    pub pairing: BTreeMap<String, String>,
}

pub fn pairing_map(corpus: &Corpus, config: &RunConfig) -> Result<BTreeMap<String, String>> {
    if config.identity_pairing {
        return Ok(corpus
            .with_explanations()
            .map(|e| (e.id.clone(), e.id.clone()))
            .collect());
    }
    random_pairing(corpus, &mut rng::stream(config.seed, Stream::RandomPairing))
}

/// Matched and random-baseline oracle vectors, in corpus order.
pub fn oracle_vectors(
    kind: OracleKind,
    corpus: &Corpus,
    pairing: &BTreeMap<String, String>,
    config: &RunConfig,
) -> Result<Vec<OracleVector>> {
    let mut out = Vec::new();
    match kind {
        OracleKind::Hard => {
            let stops = config.stopwords()?;
            for e in corpus.with_explanations() {
                let other = paired(corpus, pairing, e)?;
                out.push(hard_oracle(e, ExplanationRef::of(e), &stops)?);
                out.push(as_random(hard_oracle(e, ExplanationRef::of(other), &stops)?));
            }
        }
        OracleKind::Soft => {
            let model = Classifier::load(&config.resolved_informed_path())?;
            for e in corpus.with_explanations() {
                let other = paired(corpus, pairing, e)?;
                let t = config.soft_target_matched;
                out.push(soft_oracle(&model, e, ExplanationRef::of(e), &config.ig, t)?);
                out.push(as_random(soft_oracle(&model, e, ExplanationRef::of(other), &config.ig, t)?));
            }
        }
        OracleKind::Expert => {
            let path = config.resolved_experts_path();
            if !path.is_file() {
                return Err(Error::Validation(format!(
                    "expert oracle requested but the annotation file {} does not exist",
                    path.display()
                )));
            }
            let sets = load_expert_annotations(&path, corpus)?;
            let mut shuffle = rng::stream(config.seed, Stream::ExpertBaselineShuffle);
            for e in corpus.with_explanations() {
                let Some(set) = sets.get(&e.id) else { continue };
                let other = paired(corpus, pairing, e)?;
                let matched = expert_oracle(set)?;
                let random = if other.id == e.id {
                    as_random(matched.clone())
                } else {
                    expert_baseline(set, &other.id, &mut shuffle)?
                };
                out.push(matched);
                out.push(random);
            }
        }
    }
    Ok(out)
}

/// The second slot is the baseline even when identity pairing reuses the
/// example's own explanation.
fn as_random(mut v: OracleVector) -> OracleVector {
    v.scoring = Scoring::Random;
    v
}

fn paired<'a>(corpus: &'a Corpus, pairing: &BTreeMap<String, String>, e: &Example) -> Result<&'a Example> {
    let id = pairing
        .get(&e.id)
        .ok_or_else(|| Error::Validation(format!("{}: missing from the pairing map", e.id)))?;
    corpus
        .get(id)
        .ok_or_else(|| Error::Validation(format!("pairing target {id} is not in the corpus")))
}

pub fn oracle(config: &RunConfig) -> Result<Outcome> {
    if config.oracles.is_empty() {
        return Err(Error::Validation("no oracle kind selected".into()));
    }
    let corpus = config.corpus()?;
    let layout = config.layout();
    let pairing = pairing_map(&corpus, config)?;
    let mut out = Outcome::default();
    io::write_json(
        &layout.pairing(),
        &PairingFile {
            run_config: config.clone(),
            seed: config.seed,
            pairing: pairing.clone(),
        },
    )?;
    out.written.push(layout.pairing());
    for &kind in &config.oracles {
        let vectors = oracle_vectors(kind, &corpus, &pairing, config)?;
        if vectors.is_empty() {
            out.warnings.push(format!("{kind} oracle covers no examples"));
        }
        let file = layout.oracle(kind);
        write_jsonl_with_meta(&file, &vectors, config)?;
        out.written.push(file);
    }
    Ok(out)
}

/// Report JSON: the report fields plus the producing configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    #[serde(flatten)]
    pub report: AlignmentReport,
    pub run_config: RunConfig,
}

/// Per-example records for one model and oracle kind, in attribution order.
///
/// Attributed examples the oracle does not cover (e.g. no expert votes) are
/// left out rather than counted as skipped.
pub fn alignment_records(
    attributions: &[AttributionVector],
    oracles: &[OracleVector],
    epsilon: f64,
) -> Result<Vec<AlignmentRecord>> {
    let mut matched = BTreeMap::new();
    let mut random = BTreeMap::new();
    for v in oracles {
        let slot = match v.scoring {
            Scoring::Matched => &mut matched,
            Scoring::Random => &mut random,
        };
        slot.insert(v.example_id.as_str(), v);
    }
    let mut out = Vec::new();
    for a in attributions {
        let id = a.example_id.as_str();
        if let (Some(m), Some(r)) = (matched.get(id), random.get(id)) {
            out.push(align_example(a, m, r, epsilon)?);
        }
    }
    Ok(out)
}

fn attribution_files(layout: &Layout) -> Result<Vec<(String, PathBuf)>> {
    let dir = layout.root().join("attributions");
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        if path.extension().is_some_and(|x| x == "jsonl") {
            files.push((model_id(&path), path));
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Validation(format!("no attribution files in {}", dir.display())));
    }
    Ok(files)
}

/// Aligns every attribution file against every requested oracle. Fails after
/// writing all outputs if any report has fewer than 2 usable records.
pub fn align(config: &RunConfig) -> Result<Outcome> {
    let layout = config.layout();
    let pairing: PairingFile = io::read_json(&layout.pairing())?;
    if pairing.seed != config.seed {
        return Err(Error::Validation(format!(
            "oracles were paired with seed {} but this run uses seed {}",
            pairing.seed, config.seed
        )));
    }
    let mut out = Outcome::default();
    let mut reports = Vec::new();
    let mut insufficient = Vec::new();
    for kind in &config.oracles {
        let oracles: Vec<OracleVector> = io::read_jsonl(&layout.oracle(*kind))?;
        for (id, path) in attribution_files(&layout)? {
            let attributions: Vec<AttributionVector> = io::read_jsonl(&path)?;
            let records = alignment_records(&attributions, &oracles, config.fisher_epsilon)?;
            let file = layout.records(&id, *kind);
            write_jsonl_with_meta(&file, &records, config)?;
            out.written.push(file);
            match delta_a(&records, &id, *kind, config.seed) {
                Ok(report) => {
                    let file = layout.report(&id, *kind);
                    io::write_json(
                        &file,
                        &ReportFile {
                            report: report.clone(),
                            run_config: config.clone(),
                        },
                    )?;
                    out.written.push(file);
                    reports.push(report);
                }
                Err(Error::InsufficientData { got, .. }) => {
                    insufficient.push(format!("{id}/{kind}: {got} usable records"));
                }
                Err(e) => return Err(e),
            }
        }
    }
    out.extend(write_tables(&layout, &reports)?);
    if !insufficient.is_empty() {
        return Err(Error::Validation(format!(
            "need at least 2 usable records per report: {}",
            insufficient.join(", ")
        )));
    }
    Ok(out)
}

fn write_tables(layout: &Layout, reports: &[AlignmentReport]) -> Result<Outcome> {
    let mut out = Outcome::default();
    if reports.is_empty() {
        return Ok(out);
    }
    io::write_atomic(&layout.table_markdown(), render_markdown(reports).as_bytes())?;
    io::write_atomic(&layout.table_csv(), render_csv(reports)?.as_bytes())?;
    out.written.push(layout.table_markdown());
    out.written.push(layout.table_csv());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementFile {
    pub run_config: RunConfig,
    pub seed: u64,
    pub rows: Vec<AgreementRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonsFile {
    pub run_config: RunConfig,
    pub seed: u64,
    pub comparisons: Vec<ModelComparison>,
}

/// Summary of the aligned output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub reports: Vec<AlignmentReport>,
    pub markdown: String,
    pub agreement: Vec<AgreementRow>,
    pub comparisons: Vec<ModelComparison>,
}

/// Re-renders tables from the report files, and adds oracle agreement and
/// pairwise model comparisons where there is enough to compare.
pub fn report(config: &RunConfig) -> Result<(Outcome, Summary)> {
    let layout = config.layout();
    let dir = layout.root().join("reports");
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        // <model>.<kind>.json; the other files in reports/ have no second dot
        if name.ends_with(".json") && name.matches('.').count() >= 2 {
            paths.push(path);
        }
    }
    paths.sort();
    let mut reports = Vec::new();
    for p in &paths {
        let file: ReportFile = io::read_json(p)?;
        reports.push(file.report);
    }
    if reports.is_empty() {
        return Err(Error::Validation(format!("no alignment reports in {}", dir.display())));
    }
    let mut out = write_tables(&layout, &reports)?;

    let mut by_kind: BTreeMap<OracleKind, Vec<OracleVector>> = BTreeMap::new();
    for kind in OracleKind::ALL {
        let p = layout.oracle(kind);
        if p.is_file() {
            by_kind.insert(kind, io::read_jsonl(&p)?);
        }
    }
    let empty = Vec::new();
    let get = |k| by_kind.get(&k).unwrap_or(&empty).as_slice();
    let agreement = if by_kind.values().filter(|v| !v.is_empty()).count() >= 2 {
        let rows = oracle_agreement(get(OracleKind::Hard), get(OracleKind::Soft), get(OracleKind::Expert))?;
        io::write_json(
            &layout.agreement(),
            &AgreementFile {
                run_config: config.clone(),
                seed: config.seed,
                rows: rows.clone(),
            },
        )?;
        out.written.push(layout.agreement());
        rows
    } else {
        Vec::new()
    };

    let mut comparisons = Vec::new();
    let models: Vec<String> = reports
        .iter()
        .map(|r| r.model_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if models.len() >= 2 {
        for kind in reports.iter().map(|r| r.oracle_kind).collect::<BTreeSet<_>>() {
            for (i, a) in models.iter().enumerate() {
                for b in &models[i + 1..] {
                    let ra: Vec<AlignmentRecord> = io::read_jsonl(&layout.records(a, kind))?;
                    let rb: Vec<AlignmentRecord> = io::read_jsonl(&layout.records(b, kind))?;
                    match compare_models(a, &ra, b, &rb, kind) {
                        Ok(c) => comparisons.push(c),
                        Err(Error::InsufficientData { got, .. }) => out
                            .warnings
                            .push(format!("{a} vs {b} ({kind}): only {got} shared usable examples")),
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        io::write_json(
            &layout.comparisons(),
            &ComparisonsFile {
                run_config: config.clone(),
                seed: config.seed,
                comparisons: comparisons.clone(),
            },
        )?;
        out.written.push(layout.comparisons());
    }

    let markdown = render_markdown(&reports);
    Ok((
        out,
        Summary {
            reports,
            markdown,
            agreement,
            comparisons,
        },
    ))
}

/// All five stages in order. Training is skipped when `model_paths` is set
/// and, for the soft oracle, `informed_model_path` too.
pub fn run(config: &RunConfig) -> Result<(Outcome, Summary)> {
    let mut out = Outcome::default();
    let needs_informed = config.oracles.contains(&OracleKind::Soft) && config.informed_model_path.is_none();
    if config.model_paths.is_empty() || needs_informed {
        let mut tasks = Vec::new();
        if config.model_paths.is_empty() {
            tasks.push(Task::Nli3Way);
        }
        if needs_informed {
            tasks.push(Task::ExplanationInformed6Way);
        }
        out.extend(train(&RunConfig {
            tasks,
            ..config.clone()
        })?);
    }
    out.extend(attribute(config)?);
    out.extend(oracle(config)?);
    out.extend(align(config)?);
    let (more, summary) = report(config)?;
    out.extend(more);
    Ok((out, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_and_expert_paths() {
        assert_eq!(meta_path(Path::new("a/b.jsonl")), Path::new("a/b.jsonl.meta.json"));
        assert_eq!(
            default_experts_path(Path::new("data/synthetic_200.jsonl")),
            Path::new("data/synthetic_200.experts.jsonl")
        );
        assert_eq!(model_id(Path::new("x/nli3way.json")), "nli3way");
    }

    #[test]
    fn report_file_keeps_flat_report_keys() {
        let report = AlignmentReport {
            model_id: "m".into(),
            oracle_kind: OracleKind::Hard,
            n_used: 2,
            n_skipped: 0,
            skip_counts: BTreeMap::new(),
            delta_a: 0.1,
            mean_diff_fisher: 0.1,
            mean_c_matched: 0.2,
            mean_c_random: 0.1,
            t_statistic: Some(1.0),
            df: 1,
            p_one_sided: Some(0.25),
            p_two_sided: Some(0.5),
            variance_degenerate: false,
            seed: 4,
        };
        let file = ReportFile {
            report,
            run_config: RunConfig::new("c.jsonl", "out"),
        };
        let v = serde_json::to_value(&file).unwrap();
        for key in ["model_id", "oracle_kind", "n_used", "n_skipped", "delta_A", "t", "p_one_sided", "p_two_sided", "seed", "run_config"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: ReportFile = serde_json::from_value(v).unwrap();
        assert_eq!(back, file);
    }
}
