//! Explanation-annotated NLI examples, the shared tokenizer, and JSONL ingestion.
//!
//! Every component of the pipeline (classifiers, oracles, attribution) works on
//! token positions produced by [`tokenize`], so hard/expert oracle entries and
//! model attributions always refer to the same tokens.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved token placed between concatenated segments (premise | hypothesis | explanation).
///
/// The tokenizer splits `<` and `>` into their own tokens, so this string can
/// never come out of [`tokenize`].
pub const SEPARATOR: &str = "<SEP>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Entailment,
    Contradiction,
    Neutral,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Entailment, Label::Contradiction, Label::Neutral];

    pub fn index(self) -> usize {
        match self {
            Label::Entailment => 0,
            Label::Contradiction => 1,
            Label::Neutral => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Entailment => "entailment",
            Label::Contradiction => "contradiction",
            Label::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "entailment" => Ok(Label::Entailment),
            "contradiction" => Ok(Label::Contradiction),
            "neutral" => Ok(Label::Neutral),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub premise: String,
    pub hypothesis: String,
    pub gold_label: Label,
    /// Empty when the corpus carries no explanation for this item.
    pub explanation: String,
    pub model_prediction: Option<Label>,
}

impl Example {
    pub fn has_explanation(&self) -> bool {
        !tokenize(&self.explanation).is_empty()
    }

    /// True when a recorded prediction exists and disagrees with the gold label.
    pub fn recorded_wrong(&self) -> Option<bool> {
        self.model_prediction.map(|p| p != self.gold_label)
    }

    pub fn explanation_tokens(&self) -> TokenSequence {
        tokenize(&self.explanation)
    }
}

/// Byte offsets `[start, end)` into the text a token came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    tokens: Vec<String>,
    spans: Vec<Span>,
    /// Byte length of the source text the spans index into.
    source_len: usize,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    pub fn is_separator(&self, index: usize) -> bool {
        self.tokens[index] == SEPARATOR
    }

    pub fn separator_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_separator(i)).collect()
    }

    /// Positions of natural-language tokens (everything except separators).
    pub fn content_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_separator(i)).collect()
    }

    pub fn content_len(&self) -> usize {
        self.tokens.iter().filter(|t| *t != SEPARATOR).count()
    }

    /// Joins segments with one [`SEPARATOR`] between consecutive parts.
    ///
    /// Spans of the result index into the segment texts joined by `'\n'`; each
    /// separator spans that joining byte.
    pub fn concat(parts: &[&TokenSequence]) -> TokenSequence {
        let mut out = TokenSequence::default();
        let mut offset = 0;
        for (k, part) in parts.iter().enumerate() {
            if k > 0 {
                out.tokens.push(SEPARATOR.to_string());
                out.spans.push(Span {
                    start: offset,
                    end: offset + 1,
                });
                offset += 1;
            }
            out.tokens.extend(part.tokens.iter().cloned());
            out.spans.extend(part.spans.iter().map(|s| Span {
                start: s.start + offset,
                end: s.end + offset,
            }));
            offset += part.source_len;
        }
        out.source_len = offset;
        out
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Whitespace-and-punctuation tokenizer.
///
/// Runs of alphanumeric characters form one token; every other
/// non-whitespace character is a token of its own. Case is preserved.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    let mut word_start: Option<usize> = None;

    let flush = |start: &mut Option<usize>, end: usize, tokens: &mut Vec<String>, spans: &mut Vec<Span>| {
        if let Some(s) = start.take() {
            tokens.push(text[s..end].to_string());
            spans.push(Span { start: s, end });
        }
    };

    for (pos, c) in text.char_indices() {
        if is_word_char(c) {
            if word_start.is_none() {
                word_start = Some(pos);
            }
            continue;
        }
        flush(&mut word_start, pos, &mut tokens, &mut spans);
        if !c.is_whitespace() {
            let end = pos + c.len_utf8();
            tokens.push(text[pos..end].to_string());
            spans.push(Span { start: pos, end });
        }
    }
    flush(&mut word_start, text.len(), &mut tokens, &mut spans);

    TokenSequence {
        tokens,
        spans,
        source_len: text.len(),
    }
}

/// [`tokenize`] for model inputs, where an empty result is an error.
pub fn tokenize_input(text: &str, what: &'static str) -> Result<TokenSequence> {
    let seq = tokenize(text);
    if seq.is_empty() {
        return Err(Error::EmptySequence(what));
    }
    Ok(seq)
}

/// Premise tokens, one separator, hypothesis tokens.
pub fn concat_input(example: &Example) -> Result<TokenSequence> {
    let premise = tokenize(&example.premise);
    let hypothesis = tokenize(&example.hypothesis);
    if premise.is_empty() {
        return Err(Error::Validation(format!("example {}: empty premise", example.id)));
    }
    if hypothesis.is_empty() {
        return Err(Error::Validation(format!("example {}: empty hypothesis", example.id)));
    }
    Ok(TokenSequence::concat(&[&premise, &hypothesis]))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWordList {
    words: HashSet<String>,
    source_name: String,
}

const ENGLISH_STOP_WORDS: &str = include_str!("../data/stopwords_en.txt");

impl StopWordList {
    /// The bundled 179-word English list.
    pub fn english() -> Self {
        Self::parse(ENGLISH_STOP_WORDS, "english")
    }

    pub fn empty() -> Self {
        Self {
            words: HashSet::new(),
            source_name: "empty".into(),
        }
    }

    /// One word per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str, source_name: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Self {
            words,
            source_name: source_name.to_string(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text, &path.display().to_string()))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    name: String,
    examples: Vec<Example>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, examples: Vec<Example>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(examples.len());
        for (i, e) in examples.iter().enumerate() {
            if by_id.insert(e.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate example id {:?}", e.id)));
            }
        }
        Ok(Self {
            name: name.into(),
            examples,
            by_id,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Example> {
        self.by_id.get(id).map(|&i| &self.examples[i])
    }

    /// Examples that can enter alignment: non-empty explanation.
    pub fn with_explanations(&self) -> impl Iterator<Item = &Example> {
        self.examples.iter().filter(|e| e.has_explanation())
    }

    /// Writes the corpus in the same JSONL schema [`load_corpus`] reads.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.examples {
            let record = RawRecord {
                id: Some(e.id.clone()),
                premise: e.premise.clone(),
                hypothesis: e.hypothesis.clone(),
                label: e.gold_label.as_str().to_string(),
                explanation: if e.explanation.is_empty() {
                    None
                } else {
                    Some(e.explanation.clone())
                },
                model_prediction: e.model_prediction.map(|l| l.as_str().to_string()),
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n").map_err(|e| Error::io("<corpus writer>", e))?;
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Example;
    type IntoIter = std::slice::Iter<'a, Example>;

    fn into_iter(self) -> Self::IntoIter {
        self.examples.iter()
    }
}

/// Supported on-disk corpus layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusSchema {
    /// `{"id"?, "premise", "hypothesis", "label", "explanation"|null, "model_prediction"?}` per line.
    #[default]
    Jsonl,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    premise: String,
    hypothesis: String,
    label: String,
    #[serde(default)]
    explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model_prediction: Option<String>,
}

pub fn load_corpus(path: &Path, schema: CorpusSchema) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());
    match schema {
        CorpusSchema::Jsonl => read_corpus(BufReader::new(file), &name),
    }
}

/// Parses JSONL from any reader. Line numbers in errors are 1-based.
pub fn read_corpus<R: BufRead>(reader: R, name: &str) -> Result<Corpus> {
    let mut examples = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let gold_label = raw
            .label
            .parse::<Label>()
            .map_err(|message| Error::InvalidRecord { line: line_no, message })?;
        let model_prediction = raw
            .model_prediction
            .as_deref()
            .map(|p| {
                p.parse::<Label>().map_err(|m| Error::InvalidRecord {
                    line: line_no,
                    message: format!("model_prediction: {m}"),
                })
            })
            .transpose()?;
        let id = raw.id.unwrap_or_else(|| format!("{line_no:06}"));
        if !seen.insert(id.clone()) {
            return Err(Error::InvalidRecord {
                line: line_no,
                message: format!("duplicate id {id:?}"),
            });
        }
        examples.push(Example {
            id,
            premise: raw.premise,
            hypothesis: raw.hypothesis,
            gold_label,
            explanation: raw.explanation.unwrap_or_default(),
            model_prediction,
        });
    }
    Corpus::new(name, examples)
}
