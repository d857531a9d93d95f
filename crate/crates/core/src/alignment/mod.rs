//! Importance alignment: per-example Fisher-transformed correlations between
//! model importance and oracle importance, the random-explanation baseline,
//! and the dataset-level ΔA with its paired t-test.

pub mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::attribution::AttributionVector;
use crate::error::{DegenerateSide, Error, Result};
use crate::oracle::{OracleKind, OracleVector, Scoring};

pub use stats::{
    correlation_test, fisher, paired_t_test, pearson, spearman, student_t_cdf, student_t_sf,
    CorrelationTest, TTest, DEFAULT_FISHER_EPSILON,
};

/// Correlations over fewer tokens than this are always skipped.
pub const MIN_CORRELATION_LEN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    ZeroVarianceModel,
    ZeroVarianceOracle,
    TooShort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    #[serde(rename = "id")]
    pub example_id: String,
    pub oracle_kind: OracleKind,
    pub random_explanation_id: String,
    pub r_matched: Option<f64>,
    pub r_random: Option<f64>,
    pub c_matched: Option<f64>,
    pub c_random: Option<f64>,
    pub skipped: Option<SkipReason>,
}

impl AlignmentRecord {
    pub fn is_used(&self) -> bool {
        self.skipped.is_none()
    }

    /// `c_matched - c_random` for usable records.
    pub fn difference(&self) -> Option<f64> {
        Some(self.c_matched? - self.c_random?)
    }

    fn skipped(id: &str, kind: OracleKind, random_id: &str, reason: SkipReason) -> Self {
        Self {
            example_id: id.to_string(),
            oracle_kind: kind,
            random_explanation_id: random_id.to_string(),
            r_matched: None,
            r_random: None,
            c_matched: None,
            c_random: None,
            skipped: Some(reason),
        }
    }
}

fn skip_reason(err: &Error) -> Option<SkipReason> {
    match err {
        Error::DegenerateCorrelation(DegenerateSide::First) => Some(SkipReason::ZeroVarianceModel),
        Error::DegenerateCorrelation(DegenerateSide::Second) => Some(SkipReason::ZeroVarianceOracle),
        _ => None,
    }
}

pub fn align_example(
    model_importance: &AttributionVector,
    matched: &OracleVector,
    random: &OracleVector,
    epsilon: f64,
) -> Result<AlignmentRecord> {
    let id = &model_importance.example_id;
    if matched.example_id != *id || random.example_id != *id {
        return Err(Error::Validation(format!(
            "alignment inputs disagree on example id: {id}, {}, {}",
            matched.example_id, random.example_id
        )));
    }
    if matched.kind != random.kind {
        return Err(Error::Validation(format!(
            "{id}: matched oracle is {} but random oracle is {}",
            matched.kind, random.kind
        )));
    }
    let n = model_importance.per_token.len();
    if matched.per_token.len() != n || random.per_token.len() != n {
        return Err(Error::Validation(format!(
            "{id}: length mismatch (model {n}, matched {}, random {})",
            matched.per_token.len(),
            random.per_token.len()
        )));
    }
    let kind = matched.kind;
    let random_id = random.explanation_id.as_str();
    if n < MIN_CORRELATION_LEN {
        return Ok(AlignmentRecord::skipped(id, kind, random_id, SkipReason::TooShort));
    }
    let correlate = |oracle: &[f64]| match pearson(&model_importance.per_token, oracle) {
        Ok(r) => Ok(Ok(r)),
        Err(e) => skip_reason(&e).map(Err).ok_or(e),
    };
    let r_matched = match correlate(&matched.per_token)? {
        Ok(r) => r,
        Err(reason) => return Ok(AlignmentRecord::skipped(id, kind, random_id, reason)),
    };
    let r_random = match correlate(&random.per_token)? {
        Ok(r) => r,
        Err(reason) => return Ok(AlignmentRecord::skipped(id, kind, random_id, reason)),
    };
    Ok(AlignmentRecord {
        example_id: id.clone(),
        oracle_kind: kind,
        random_explanation_id: random_id.to_string(),
        r_matched: Some(r_matched),
        r_random: Some(r_random),
        c_matched: Some(fisher(r_matched, epsilon)?),
        c_random: Some(fisher(r_random, epsilon)?),
        skipped: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub model_id: String,
    pub oracle_kind: OracleKind,
    pub n_used: usize,
    pub n_skipped: usize,
    pub skip_counts: BTreeMap<SkipReason, usize>,
    #[serde(rename = "delta_A")]
    pub delta_a: f64,
    pub mean_diff_fisher: f64,
    pub mean_c_matched: f64,
    pub mean_c_random: f64,
    #[serde(rename = "t")]
    pub t_statistic: Option<f64>,
    pub df: usize,
    pub p_one_sided: Option<f64>,
    pub p_two_sided: Option<f64>,
    /// Differences were all equal but not all zero, so no t-statistic exists.
    pub variance_degenerate: bool,
    pub seed: u64,
}

impl AlignmentReport {
    pub fn stars(&self) -> &'static str {
        significance_stars(self.p_one_sided)
    }
}

pub fn significance_stars(p: Option<f64>) -> &'static str {
    match p {
        Some(p) if p < 0.001 => "***",
        Some(p) if p < 0.01 => "**",
        Some(p) if p < 0.05 => "*",
        _ => "",
    }
}

/// ΔA = tanh(mean(c_matched - c_random)) over usable records, with a one-sided
/// paired t-test of ΔA > 0. Records are reduced in example-id order.
pub fn delta_a(
    records: &[AlignmentRecord],
    model_id: &str,
    oracle_kind: OracleKind,
    seed: u64,
) -> Result<AlignmentReport> {
    let mut sorted: Vec<&AlignmentRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.example_id.cmp(&b.example_id));

    let mut skip_counts = BTreeMap::new();
    let mut used = Vec::new();
    for r in &sorted {
        if r.oracle_kind != oracle_kind {
            return Err(Error::Validation(format!(
                "{}: {} record in a {} report",
                r.example_id, r.oracle_kind, oracle_kind
            )));
        }
        match (r.skipped, r.c_matched, r.c_random) {
            (Some(reason), _, _) => *skip_counts.entry(reason).or_insert(0) += 1,
            (None, Some(m), Some(c)) => used.push((m, c)),
            (None, _, _) => {
                return Err(Error::Validation(format!(
                    "{}: unskipped record without correlations",
                    r.example_id
                )))
            }
        }
    }
    if used.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: used.len(),
        });
    }
    let n = used.len() as f64;
    let diffs: Vec<f64> = used.iter().map(|(m, c)| m - c).collect();
    let mean_diff_fisher = diffs.iter().sum::<f64>() / n;
    let mean_c_matched = used.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_c_random = used.iter().map(|p| p.1).sum::<f64>() / n;

    let (t_statistic, p_one_sided, p_two_sided, variance_degenerate) = match paired_t_test(&diffs) {
        Ok(t) => (Some(t.t), Some(t.p_one_sided), Some(t.p_two_sided), false),
        Err(Error::DegenerateVariance) if diffs.iter().all(|&d| d == 0.0) => {
            (Some(0.0), Some(0.5), Some(1.0), false)
        }
        Err(Error::DegenerateVariance) => (None, None, None, true),
        Err(e) => return Err(e),
    };

    Ok(AlignmentReport {
        model_id: model_id.to_string(),
        oracle_kind,
        n_used: used.len(),
        n_skipped: sorted.len() - used.len(),
        skip_counts,
        delta_a: mean_diff_fisher.tanh(),
        mean_diff_fisher,
        mean_c_matched,
        mean_c_random,
        t_statistic,
        df: used.len() - 1,
        p_one_sided,
        p_two_sided,
        variance_degenerate,
        seed,
    })
}

/// Paired comparison of two models' per-example alignment on the examples
/// both could score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub model_a: String,
    pub model_b: String,
    pub oracle_kind: OracleKind,
    pub n_shared: usize,
    /// mean over shared examples of (ΔC_a - ΔC_b), Fisher scale.
    pub mean_diff_fisher: f64,
    pub t: Option<f64>,
    pub p_two_sided: Option<f64>,
}

pub fn compare_models(
    model_a: &str,
    records_a: &[AlignmentRecord],
    model_b: &str,
    records_b: &[AlignmentRecord],
    oracle_kind: OracleKind,
) -> Result<ModelComparison> {
    let b: BTreeMap<&str, f64> = records_b
        .iter()
        .filter(|r| r.oracle_kind == oracle_kind)
        .filter_map(|r| Some((r.example_id.as_str(), r.difference()?)))
        .collect();
    let mut a: Vec<(&str, f64)> = records_a
        .iter()
        .filter(|r| r.oracle_kind == oracle_kind)
        .filter_map(|r| Some((r.example_id.as_str(), r.difference()?)))
        .collect();
    a.sort_by(|x, y| x.0.cmp(y.0));
    let diffs: Vec<f64> = a
        .iter()
        .filter_map(|(id, da)| b.get(id).map(|db| da - db))
        .collect();
    if diffs.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: diffs.len(),
        });
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let (t, p) = match paired_t_test(&diffs) {
        Ok(t) => (Some(t.t), Some(t.p_two_sided)),
        Err(Error::DegenerateVariance) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(ModelComparison {
        model_a: model_a.to_string(),
        model_b: model_b.to_string(),
        oracle_kind,
        n_shared: diffs.len(),
        mean_diff_fisher: mean,
        t,
        p_two_sided: p,
    })
}

/// Pearson correlation between model accuracy and ΔA across runs, with a
/// two-sided test on `n - 2` degrees of freedom.
pub fn accuracy_alignment_correlation(points: &[(f64, f64)]) -> Result<CorrelationTest> {
    if points.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: points.len(),
        });
    }
    let acc: Vec<f64> = points.iter().map(|p| p.0).collect();
    let align: Vec<f64> = points.iter().map(|p| p.1).collect();
    correlation_test(pearson(&acc, &align)?, points.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub first: OracleKind,
    pub second: OracleKind,
    pub n_examples: usize,
    pub n_tokens: usize,
    pub spearman: CorrelationTest,
    /// Value reported for full-scale fine-tuned models on a different corpus.
    /// Informational only.
    pub reference_r: Option<f64>,
}

fn reference_agreement(a: OracleKind, b: OracleKind) -> Option<f64> {
    use OracleKind::*;
    match (a, b) {
        (Hard, Expert) | (Expert, Hard) => Some(0.24),
        (Soft, Expert) | (Expert, Soft) => Some(0.14),
        (Hard, Soft) | (Soft, Hard) => Some(0.11),
        _ => None,
    }
}

fn matched_by_id(vectors: &[OracleVector]) -> BTreeMap<&str, &OracleVector> {
    vectors
        .iter()
        .filter(|v| v.scoring == Scoring::Matched)
        .map(|v| (v.example_id.as_str(), v))
        .collect()
}

/// Pooled token-level Spearman correlation of two oracles over the examples
/// both cover.
pub fn agreement_pair(first: &[OracleVector], second: &[OracleVector]) -> Result<AgreementRow> {
    let (a, b) = (matched_by_id(first), matched_by_id(second));
    let kind_a = a.values().next().map(|v| v.kind);
    let kind_b = b.values().next().map(|v| v.kind);
    let (Some(kind_a), Some(kind_b)) = (kind_a, kind_b) else {
        return Err(Error::Validation("oracle agreement needs matched vectors on both sides".into()));
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut n_examples = 0;
    for (id, va) in &a {
        let Some(vb) = b.get(id) else { continue };
        if va.per_token.len() != vb.per_token.len() {
            return Err(Error::Validation(format!(
                "{id}: {} oracle has {} tokens, {} oracle has {}",
                kind_a,
                va.per_token.len(),
                kind_b,
                vb.per_token.len()
            )));
        }
        xs.extend_from_slice(&va.per_token);
        ys.extend_from_slice(&vb.per_token);
        n_examples += 1;
    }
    if n_examples == 0 {
        return Err(Error::Validation(format!(
            "no common examples between {kind_a} and {kind_b} oracles"
        )));
    }
    let r = spearman(&xs, &ys)?;
    Ok(AgreementRow {
        first: kind_a,
        second: kind_b,
        n_examples,
        n_tokens: xs.len(),
        spearman: correlation_test(r, xs.len())?,
        reference_r: reference_agreement(kind_a, kind_b),
    })
}

/// Hard–expert, soft–expert and hard–soft agreement; pairs with an empty
/// side are left out.
pub fn oracle_agreement(
    hard: &[OracleVector],
    soft: &[OracleVector],
    expert: &[OracleVector],
) -> Result<Vec<AgreementRow>> {
    let mut rows = Vec::new();
    for (x, y) in [(hard, expert), (soft, expert), (hard, soft)] {
        if x.is_empty() || y.is_empty() {
            continue;
        }
        rows.push(agreement_pair(x, y)?);
    }
    if rows.is_empty() {
        return Err(Error::Validation("oracle agreement needs at least two oracle kinds".into()));
    }
    Ok(rows)
}

fn table_layout(reports: &[AlignmentReport]) -> (Vec<&str>, Vec<OracleKind>, BTreeMap<(&str, OracleKind), &AlignmentReport>) {
    let models: BTreeSet<&str> = reports.iter().map(|r| r.model_id.as_str()).collect();
    let kinds: BTreeSet<OracleKind> = reports.iter().map(|r| r.oracle_kind).collect();
    let cells = reports
        .iter()
        .map(|r| ((r.model_id.as_str(), r.oracle_kind), r))
        .collect();
    (models.into_iter().collect(), kinds.into_iter().collect(), cells)
}

/// Rows are models, columns are ΔA per oracle with significance stars
/// (`*` p < 0.05, `**` p < 0.01, `***` p < 0.001, one-sided).
pub fn render_markdown(reports: &[AlignmentReport]) -> String {
    let (models, kinds, cells) = table_layout(reports);
    let mut out = String::from("| Model |");
    for k in &kinds {
        let _ = write!(out, " ΔA {k} |");
    }
    out.push_str("\n|---|");
    for _ in &kinds {
        out.push_str("---:|");
    }
    out.push('\n');
    for m in models {
        let _ = write!(out, "| {m} |");
        for k in &kinds {
            match cells.get(&(m, *k)) {
                Some(r) => {
                    let _ = write!(out, " {:.3}{} (n={}) |", r.delta_a, r.stars(), r.n_used);
                }
                None => out.push_str(" – |"),
            }
        }
        out.push('\n');
    }
    out.push_str("\n`*` p < 0.05, `**` p < 0.01, `***` p < 0.001 (one-sided paired t-test, ΔA > 0)\n");
    out
}

pub fn render_csv(reports: &[AlignmentReport]) -> Result<String> {
    let (models, kinds, cells) = table_layout(reports);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model_id".to_string()];
    for k in &kinds {
        header.extend([
            format!("delta_A_{k}"),
            format!("p_one_sided_{k}"),
            format!("stars_{k}"),
            format!("n_used_{k}"),
            format!("n_skipped_{k}"),
        ]);
    }
    w.write_record(&header).map_err(csv_err)?;
    for m in models {
        let mut row = vec![m.to_string()];
        for k in &kinds {
            match cells.get(&(m, *k)) {
                Some(r) => row.extend([
                    r.delta_a.to_string(),
                    r.p_one_sided.map(|p| p.to_string()).unwrap_or_default(),
                    r.stars().to_string(),
                    r.n_used.to_string(),
                    r.n_skipped.to_string(),
                ]),
                None => row.extend(std::iter::repeat_n(String::new(), 5)),
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Validation(format!("csv: {e}"))
}
