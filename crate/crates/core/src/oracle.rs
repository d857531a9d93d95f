//! Oracle importance: what an explanation says each input token should matter.
//!
//! * hard: 1 where the (non-stop-word) input token occurs in the explanation
//! * soft: |IG| of an explanation-informed 6-way classifier, input positions only
//! * expert: fraction of annotators who marked the token
//!
//! Explanations are identified by the id of the example they were written for.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::{absolute_at, integrated_gradients, IgConfig};
use crate::corpus::{concat_input, tokenize, Corpus, Example, TokenSequence};
use crate::error::{Error, Result};
use crate::io;
use crate::model::{informed_input, other_index, Classifier, SixWayLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Hard,
    Soft,
    Expert,
}

impl OracleKind {
    pub const ALL: [OracleKind; 3] = [OracleKind::Hard, OracleKind::Soft, OracleKind::Expert];

    pub fn as_str(self) -> &'static str {
        match self {
            OracleKind::Hard => "hard",
            OracleKind::Soft => "soft",
            OracleKind::Expert => "expert",
        }
    }
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OracleKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "hard" => Ok(OracleKind::Hard),
            "soft" => Ok(OracleKind::Soft),
            "expert" => Ok(OracleKind::Expert),
            other => Err(format!("unknown oracle kind {other:?}")),
        }
    }
}

/// Whether the oracle was scored with the example's own explanation or the
/// randomly paired one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scoring {
    Matched,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleVector {
    #[serde(rename = "id")]
    pub example_id: String,
    pub kind: OracleKind,
    pub scoring: Scoring,
    pub explanation_id: String,
    pub per_token: Vec<f64>,
}

/// An explanation and the id of the example it was written for.
#[derive(Debug, Clone, Copy)]
pub struct ExplanationRef<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

impl<'a> ExplanationRef<'a> {
    pub fn of(example: &'a Example) -> Self {
        Self {
            id: &example.id,
            text: &example.explanation,
        }
    }
}

fn scoring_for(example: &Example, explanation: ExplanationRef<'_>) -> Scoring {
    if explanation.id == example.id {
        Scoring::Matched
    } else {
        Scoring::Random
    }
}

/// Binary overlap over the non-separator positions of `input`.
///
/// Exact lowercase match; stop words never count.
pub fn overlap(
    input: &TokenSequence,
    explanation: &TokenSequence,
    stops: &crate::corpus::StopWordList,
) -> Result<Vec<f64>> {
    if explanation.is_empty() {
        return Err(Error::Validation("hard oracle needs a non-empty explanation".into()));
    }
    let expl: HashSet<String> = explanation.iter().map(str::to_lowercase).collect();
    Ok(input
        .content_positions()
        .into_iter()
        .map(|i| {
            let tok = &input.tokens()[i];
            if !stops.contains(tok) && expl.contains(&tok.to_lowercase()) {
                1.0
            } else {
                0.0
            }
        })
        .collect())
}

pub fn hard_oracle(
    example: &Example,
    explanation: ExplanationRef<'_>,
    stops: &crate::corpus::StopWordList,
) -> Result<OracleVector> {
    let input = concat_input(example)?;
    Ok(OracleVector {
        example_id: example.id.clone(),
        kind: OracleKind::Hard,
        scoring: scoring_for(example, explanation),
        explanation_id: explanation.id.to_string(),
        per_token: overlap(&input, &tokenize(explanation.text), stops)?,
    })
}

/// |IG| of the explanation-informed model on (input, separator, explanation),
/// keeping only the input's natural-language positions.
///
/// The IG target is `(gold label, target_matched)`; callers use
/// `target_matched = true` for both matched and random scoring by default.
pub fn soft_oracle(
    informed_model: &Classifier,
    example: &Example,
    explanation: ExplanationRef<'_>,
    config: &IgConfig,
    target_matched: bool,
) -> Result<OracleVector> {
    if informed_model.num_classes() != 6 {
        return Err(Error::Validation(format!(
            "soft oracle needs a 6-way explanation-informed model, got {} classes",
            informed_model.num_classes()
        )));
    }
    let input_len = concat_input(example)?.len();
    let full = informed_input(example, explanation.text)?;
    let target = SixWayLabel {
        nli_label: example.gold_label,
        explanation_matched: target_matched,
    };
    let signed = integrated_gradients(informed_model, &full, target.index(), config)?;
    let keep: Vec<usize> = (0..input_len).filter(|&i| !full.is_separator(i)).collect();
    Ok(OracleVector {
        example_id: example.id.clone(),
        kind: OracleKind::Soft,
        scoring: scoring_for(example, explanation),
        explanation_id: explanation.id.to_string(),
        per_token: absolute_at(&signed, &keep),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertAnnotationSet {
    pub example_id: String,
    pub annotator_ids: Vec<String>,
    /// One 0/1 vector per annotator over the example's non-separator tokens.
    pub annotators: Vec<Vec<u8>>,
}

impl ExpertAnnotationSet {
    pub fn token_len(&self) -> Option<usize> {
        self.annotators.first().map(Vec::len)
    }
}

/// `(1/N) * sum_k expert_k[i]`
pub fn expert_oracle(annotations: &ExpertAnnotationSet) -> Result<OracleVector> {
    let n = annotations.annotators.len();
    let len = annotations
        .token_len()
        .ok_or_else(|| Error::Validation(format!("{}: no annotators", annotations.example_id)))?;
    let mut sums = vec![0u32; len];
    for (k, votes) in annotations.annotators.iter().enumerate() {
        if votes.len() != len {
            return Err(Error::Validation(format!(
                "{}: annotator {} marked {} tokens, expected {len}",
                annotations.example_id,
                annotations.annotator_ids.get(k).map_or("?", String::as_str),
                votes.len()
            )));
        }
        for (s, &v) in sums.iter_mut().zip(votes) {
            if v > 1 {
                return Err(Error::Validation(format!(
                    "{}: expert votes must be 0 or 1, got {v}",
                    annotations.example_id
                )));
            }
            *s += u32::from(v);
        }
    }
    Ok(OracleVector {
        example_id: annotations.example_id.clone(),
        kind: OracleKind::Expert,
        scoring: Scoring::Matched,
        explanation_id: annotations.example_id.clone(),
        per_token: sums.into_iter().map(|s| f64::from(s) / n as f64).collect(),
    })
}

/// Random-baseline stand-in for the expert oracle.
///
/// Expert votes only exist for an example's own explanation, so the baseline
/// keeps the vote fractions and shuffles their positions.
pub fn expert_baseline(
    annotations: &ExpertAnnotationSet,
    paired_explanation_id: &str,
    rng: &mut impl Rng,
) -> Result<OracleVector> {
    let mut v = expert_oracle(annotations)?;
    v.per_token.shuffle(rng);
    v.scoring = Scoring::Random;
    v.explanation_id = paired_explanation_id.to_string();
    Ok(v)
}

/// One line of the expert sidecar: one annotator's votes for one example.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
pub struct ExpertAnnotationLine {
    pub id: String,
    pub annotator: String,
    pub important: Vec<u8>,
}

/// Reads `{"id", "annotator", "important": [0|1, ...]}` lines and checks every
/// vector against the example's non-separator token count.
pub fn load_expert_annotations(
    path: &Path,
    corpus: &Corpus,
) -> Result<BTreeMap<String, ExpertAnnotationSet>> {
    let lines: Vec<ExpertAnnotationLine> = io::read_jsonl(path)?;
    let mut sets: BTreeMap<String, ExpertAnnotationSet> = BTreeMap::new();
    for (idx, line) in lines.into_iter().enumerate() {
        let example = corpus.get(&line.id).ok_or_else(|| Error::InvalidRecord {
            line: idx + 1,
            message: format!("unknown example id {:?}", line.id),
        })?;
        let expected = concat_input(example)?.content_len();
        if line.important.len() != expected {
            return Err(Error::InvalidRecord {
                line: idx + 1,
                message: format!(
                    "{}: {} votes for {expected} tokens",
                    line.id,
                    line.important.len()
                ),
            });
        }
        if line.important.iter().any(|&v| v > 1) {
            return Err(Error::InvalidRecord {
                line: idx + 1,
                message: "votes must be 0 or 1".into(),
            });
        }
        let set = sets
            .entry(line.id.clone())
            .or_insert_with(|| ExpertAnnotationSet {
                example_id: line.id.clone(),
                annotator_ids: Vec::new(),
                annotators: Vec::new(),
            });
        if set.annotator_ids.contains(&line.annotator) {
            return Err(Error::InvalidRecord {
                line: idx + 1,
                message: format!("annotator {:?} repeated for {}", line.annotator, line.id),
            });
        }
        set.annotator_ids.push(line.annotator);
        set.annotators.push(line.important);
    }
    Ok(sets)
}

/// For each example with an explanation, an explanation id drawn uniformly
/// from the *other* such examples. Keyed and iterated by example id.
pub fn random_pairing(corpus: &Corpus, rng: &mut impl Rng) -> Result<BTreeMap<String, String>> {
    let eligible: Vec<&Example> = corpus.with_explanations().collect();
    if eligible.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: eligible.len(),
        });
    }
    Ok(eligible
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let j = other_index(rng, eligible.len(), i);
            (e.id.clone(), eligible[j].id.clone())
        })
        .collect())
}
