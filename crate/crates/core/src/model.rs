//! Small differentiable text classifiers over mean-pooled token embeddings.
//!
//! Two heads are provided: a linear map of the mean embedding and a
//! one-hidden-layer `tanh` MLP over it. Both expose analytic gradients of any
//! pre-softmax class score with respect to the embedded input, which is what
//! integrated gradients integrates. Training is plain mini-batch gradient
//! descent on cross-entropy with hand-written backprop.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{concat_input, tokenize, Corpus, Example, Label, TokenSequence, SEPARATOR};
use crate::error::{Error, Result};
use crate::io;
use crate::rng::{self, Stream};

pub const PAD_TOKEN: &str = "<PAD>";
pub const UNK_TOKEN: &str = "<UNK>";

const INIT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    vocab: BTreeMap<String, usize>,
    dim: usize,
    weights: Array2<f64>,
    unk_index: usize,
    pad_index: usize,
    sep_index: usize,
}

impl EmbeddingTable {
    /// Reserved rows come first (pad, unk, separator); `words` are lowercased,
    /// deduplicated and assigned rows in sorted order.
    pub fn build<'a, I>(words: I, dim: usize, rng: &mut impl Rng) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        if dim == 0 {
            return Err(Error::Validation("embedding dim must be positive".into()));
        }
        let mut vocab = BTreeMap::new();
        vocab.insert(PAD_TOKEN.to_string(), 0);
        vocab.insert(UNK_TOKEN.to_string(), 1);
        vocab.insert(SEPARATOR.to_string(), 2);
        let distinct: BTreeSet<String> = words
            .into_iter()
            .filter(|w| *w != SEPARATOR)
            .map(str::to_lowercase)
            .collect();
        for w in distinct {
            let next = vocab.len();
            vocab.entry(w).or_insert(next);
        }
        let mut weights = Array2::zeros((vocab.len(), dim));
        for (row, mut r) in weights.axis_iter_mut(Axis(0)).enumerate() {
            if row == 0 {
                continue;
            }
            r.mapv_inplace(|_| rng.random_range(-INIT_RANGE..=INIT_RANGE));
        }
        Ok(Self {
            vocab,
            dim,
            weights,
            unk_index: 1,
            pad_index: 0,
            sep_index: 2,
        })
    }

    /// Table with caller-supplied rows for the given words (reserved rows included in `weights`).
    ///
    /// `words[k]` gets row `k + 3`; rows 0..3 are pad, unk and separator. The pad row is zeroed.
    pub fn from_rows(words: &[&str], mut weights: Array2<f64>) -> Result<Self> {
        if weights.nrows() != words.len() + 3 || weights.ncols() == 0 {
            return Err(Error::Shape {
                expected: format!("({}, dim>0)", words.len() + 3),
                actual: format!("{:?}", weights.shape()),
            });
        }
        weights.row_mut(0).fill(0.0);
        let mut vocab = BTreeMap::new();
        vocab.insert(PAD_TOKEN.to_string(), 0);
        vocab.insert(UNK_TOKEN.to_string(), 1);
        vocab.insert(SEPARATOR.to_string(), 2);
        for (k, w) in words.iter().enumerate() {
            if vocab.insert(w.to_lowercase(), k + 3).is_some() {
                return Err(Error::Validation(format!("duplicate vocabulary entry {w:?}")));
            }
        }
        Ok(Self {
            vocab,
            dim: weights.ncols(),
            weights,
            unk_index: 1,
            pad_index: 0,
            sep_index: 2,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn unk_index(&self) -> usize {
        self.unk_index
    }

    pub fn pad_index(&self) -> usize {
        self.pad_index
    }

    pub fn sep_index(&self) -> usize {
        self.sep_index
    }

    pub fn index_of(&self, token: &str) -> usize {
        if token == SEPARATOR {
            return self.sep_index;
        }
        self.vocab
            .get(&token.to_lowercase())
            .copied()
            .unwrap_or(self.unk_index)
    }

    pub fn contains(&self, token: &str) -> bool {
        token == SEPARATOR || self.vocab.contains_key(&token.to_lowercase())
    }

    pub fn row(&self, index: usize) -> ArrayView1<'_, f64> {
        self.weights.row(index)
    }

    pub fn set_row(&mut self, index: usize, values: ArrayView1<'_, f64>) -> Result<()> {
        if index == self.pad_index {
            return Err(Error::Validation("pad embedding is pinned to zero".into()));
        }
        if values.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim.to_string(),
                actual: values.len().to_string(),
            });
        }
        self.weights.row_mut(index).assign(&values);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    BagOfEmbeddingsLinear,
    MeanEmbeddingMlp,
}

/// Parameters on top of the mean embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "snake_case")]
pub enum Head {
    BagOfEmbeddingsLinear {
        weight: Array2<f64>,
        bias: Array1<f64>,
    },
    MeanEmbeddingMlp {
        hidden_weight: Array2<f64>,
        hidden_bias: Array1<f64>,
        output_weight: Array2<f64>,
        output_bias: Array1<f64>,
    },
}

impl Head {
    fn architecture(&self) -> Architecture {
        match self {
            Head::BagOfEmbeddingsLinear { .. } => Architecture::BagOfEmbeddingsLinear,
            Head::MeanEmbeddingMlp { .. } => Architecture::MeanEmbeddingMlp,
        }
    }

    fn input_dim(&self) -> usize {
        match self {
            Head::BagOfEmbeddingsLinear { weight, .. } => weight.ncols(),
            Head::MeanEmbeddingMlp { hidden_weight, .. } => hidden_weight.ncols(),
        }
    }

    fn num_classes(&self) -> usize {
        match self {
            Head::BagOfEmbeddingsLinear { bias, .. } => bias.len(),
            Head::MeanEmbeddingMlp { output_bias, .. } => output_bias.len(),
        }
    }

    fn scores(&self, pooled: ArrayView1<'_, f64>) -> Array1<f64> {
        match self {
            Head::BagOfEmbeddingsLinear { weight, bias } => weight.dot(&pooled) + bias,
            Head::MeanEmbeddingMlp {
                hidden_weight,
                hidden_bias,
                output_weight,
                output_bias,
            } => {
                let hidden = (hidden_weight.dot(&pooled) + hidden_bias).mapv(f64::tanh);
                output_weight.dot(&hidden) + output_bias
            }
        }
    }

    /// Backprop of `delta = dL/dscores` to the pooled input. Parameter
    /// gradients are accumulated into `grad` when given.
    fn backward(
        &self,
        pooled: ArrayView1<'_, f64>,
        delta: ArrayView1<'_, f64>,
        grad: Option<&mut Head>,
    ) -> Array1<f64> {
        match self {
            Head::BagOfEmbeddingsLinear { weight, .. } => {
                if let Some(Head::BagOfEmbeddingsLinear { weight: gw, bias: gb }) = grad {
                    outer_add(gw, delta, pooled);
                    *gb += &delta;
                }
                weight.t().dot(&delta)
            }
            Head::MeanEmbeddingMlp {
                hidden_weight,
                hidden_bias,
                output_weight,
                ..
            } => {
                let hidden = (hidden_weight.dot(&pooled) + hidden_bias).mapv(f64::tanh);
                let d_hidden = output_weight.t().dot(&delta);
                let d_pre = &d_hidden * &hidden.mapv(|z| 1.0 - z * z);
                if let Some(Head::MeanEmbeddingMlp {
                    hidden_weight: ghw,
                    hidden_bias: ghb,
                    output_weight: gow,
                    output_bias: gob,
                }) = grad
                {
                    outer_add(gow, delta, hidden.view());
                    *gob += &delta;
                    outer_add(ghw, d_pre.view(), pooled);
                    *ghb += &d_pre;
                }
                hidden_weight.t().dot(&d_pre)
            }
        }
    }

    fn zeros_like(&self) -> Head {
        match self {
            Head::BagOfEmbeddingsLinear { weight, bias } => Head::BagOfEmbeddingsLinear {
                weight: Array2::zeros(weight.raw_dim()),
                bias: Array1::zeros(bias.raw_dim()),
            },
            Head::MeanEmbeddingMlp {
                hidden_weight,
                hidden_bias,
                output_weight,
                output_bias,
            } => Head::MeanEmbeddingMlp {
                hidden_weight: Array2::zeros(hidden_weight.raw_dim()),
                hidden_bias: Array1::zeros(hidden_bias.raw_dim()),
                output_weight: Array2::zeros(output_weight.raw_dim()),
                output_bias: Array1::zeros(output_bias.raw_dim()),
            },
        }
    }

    /// `self -= step * grad`
    fn descend(&mut self, grad: &Head, step: f64) {
        match (self, grad) {
            (
                Head::BagOfEmbeddingsLinear { weight, bias },
                Head::BagOfEmbeddingsLinear { weight: gw, bias: gb },
            ) => {
                weight.scaled_add(-step, gw);
                bias.scaled_add(-step, gb);
            }
            (
                Head::MeanEmbeddingMlp {
                    hidden_weight,
                    hidden_bias,
                    output_weight,
                    output_bias,
                },
                Head::MeanEmbeddingMlp {
                    hidden_weight: ghw,
                    hidden_bias: ghb,
                    output_weight: gow,
                    output_bias: gob,
                },
            ) => {
                hidden_weight.scaled_add(-step, ghw);
                hidden_bias.scaled_add(-step, ghb);
                output_weight.scaled_add(-step, gow);
                output_bias.scaled_add(-step, gob);
            }
            _ => unreachable!("gradient head shape always mirrors parameters"),
        }
    }
}

fn outer_add(target: &mut Array2<f64>, left: ArrayView1<'_, f64>, right: ArrayView1<'_, f64>) {
    for (mut row, &l) in target.axis_iter_mut(Axis(0)).zip(left.iter()) {
        row.scaled_add(l, &right);
    }
}

pub fn softmax(scores: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = scores.fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    let exp = scores.mapv(|s| (s - max).exp());
    let total = exp.sum();
    exp / total
}

/// 6-way target of the explanation-informed classifier: NLI label crossed
/// with "is the appended explanation the one written for this example".
///
/// Class index is `2 * label.index() + (0 if matched else 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SixWayLabel {
    pub nli_label: Label,
    pub explanation_matched: bool,
}

impl SixWayLabel {
    pub fn index(self) -> usize {
        2 * self.nli_label.index() + usize::from(!self.explanation_matched)
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Some(Self {
            nli_label: Label::from_index(index / 2)?,
            explanation_matched: index % 2 == 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "nli_3way")]
    Nli3Way,
    #[serde(rename = "explanation_informed_6way")]
    ExplanationInformed6Way,
}

impl Task {
    pub fn num_classes(self) -> usize {
        match self {
            Task::Nli3Way => 3,
            Task::ExplanationInformed6Way => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub task: Task,
    pub architecture: Architecture,
    pub dim: usize,
    /// Hidden width of the MLP head; ignored by the linear head.
    pub hidden: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 2,
            learning_rate: 1.0,
            batch_size: 1,
            seed: 0,
            task: Task::Nli3Way,
            architecture: Architecture::BagOfEmbeddingsLinear,
            dim: 32,
            hidden: 32,
        }
    }
}

impl TrainingConfig {
    /// Defaults for the explanation-informed model. A linear head would make
    /// the input-position attributions independent of the explanation up to
    /// scale, so the soft oracle defaults to the MLP.
    pub fn informed_default() -> Self {
        Self {
            learning_rate: 0.2,
            task: Task::ExplanationInformed6Way,
            architecture: Architecture::MeanEmbeddingMlp,
            ..Self::default()
        }
    }
}

impl TrainingConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.dim == 0 {
            return Err(Error::Validation("epochs, batch_size and dim must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation("learning_rate must be a positive finite number".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    embedding: EmbeddingTable,
    head: Head,
    num_classes: usize,
    rng_seed: u64,
    #[serde(default)]
    training: Option<TrainingConfig>,
}

impl Classifier {
    pub fn new(embedding: EmbeddingTable, head: Head, rng_seed: u64) -> Result<Self> {
        if head.input_dim() != embedding.dim() {
            return Err(Error::Shape {
                expected: format!("head input dim {}", embedding.dim()),
                actual: head.input_dim().to_string(),
            });
        }
        let num_classes = head.num_classes();
        if num_classes != 3 && num_classes != 6 {
            return Err(Error::Validation(format!(
                "num_classes must be 3 or 6, got {num_classes}"
            )));
        }
        if let Head::MeanEmbeddingMlp {
            hidden_weight,
            hidden_bias,
            output_weight,
            output_bias,
        } = &head
        {
            let h = hidden_weight.nrows();
            if hidden_bias.len() != h || output_weight.ncols() != h || output_weight.nrows() != output_bias.len() {
                return Err(Error::Shape {
                    expected: format!("consistent hidden width {h}"),
                    actual: "mismatched MLP tensors".into(),
                });
            }
        }
        if let Head::BagOfEmbeddingsLinear { weight, bias } = &head {
            if weight.nrows() != bias.len() {
                return Err(Error::Shape {
                    expected: format!("{} weight rows", bias.len()),
                    actual: weight.nrows().to_string(),
                });
            }
        }
        Ok(Self {
            embedding,
            head,
            num_classes,
            rng_seed,
            training: None,
        })
    }

    /// Freshly initialised head: Glorot-uniform weights, zero biases.
    pub fn initialize(
        embedding: EmbeddingTable,
        architecture: Architecture,
        num_classes: usize,
        hidden: usize,
        rng_seed: u64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let dim = embedding.dim();
        // Glorot-uniform head weights
        let mut uniform = |shape: (usize, usize)| {
            let limit = (6.0 / (shape.0 + shape.1) as f64).sqrt();
            Array2::from_shape_simple_fn(shape, || rng.random_range(-limit..=limit))
        };
        let head = match architecture {
            Architecture::BagOfEmbeddingsLinear => Head::BagOfEmbeddingsLinear {
                weight: uniform((num_classes, dim)),
                bias: Array1::zeros(num_classes),
            },
            Architecture::MeanEmbeddingMlp => Head::MeanEmbeddingMlp {
                hidden_weight: uniform((hidden, dim)),
                hidden_bias: Array1::zeros(hidden),
                output_weight: uniform((num_classes, hidden)),
                output_bias: Array1::zeros(num_classes),
            },
        };
        Self::new(embedding, head, rng_seed)
    }

    pub fn architecture(&self) -> Architecture {
        self.head.architecture()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.embedding.dim()
    }

    pub fn embedding(&self) -> &EmbeddingTable {
        &self.embedding
    }

    pub fn embedding_mut(&mut self) -> &mut EmbeddingTable {
        &mut self.embedding
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn training_config(&self) -> Option<&TrainingConfig> {
        self.training.as_ref()
    }

    pub fn embed(&self, tokens: &TokenSequence) -> Array2<f64> {
        let mut out = Array2::zeros((tokens.len(), self.dim()));
        for (mut row, tok) in out.axis_iter_mut(Axis(0)).zip(tokens.iter()) {
            row.assign(&self.embedding.row(self.embedding.index_of(tok)));
        }
        out
    }

    fn check_input(&self, embedded: ArrayView2<'_, f64>) -> Result<()> {
        if embedded.nrows() == 0 {
            return Err(Error::EmptySequence("embedded input"));
        }
        if embedded.ncols() != self.dim() {
            return Err(Error::Shape {
                expected: format!("n x {}", self.dim()),
                actual: format!("{:?}", embedded.shape()),
            });
        }
        Ok(())
    }

    fn pool(embedded: ArrayView2<'_, f64>) -> Array1<f64> {
        embedded.sum_axis(Axis(0)) / embedded.nrows() as f64
    }

    /// Pre-softmax class scores.
    pub fn scores(&self, embedded: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.check_input(embedded)?;
        Ok(self.head.scores(Self::pool(embedded).view()))
    }

    pub fn forward(&self, embedded: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(softmax(self.scores(embedded)?.view()))
    }

    pub fn predict_tokens(&self, tokens: &TokenSequence) -> Result<usize> {
        let probs = self.forward(self.embed(tokens).view())?;
        Ok(argmax(probs.view()))
    }

    /// NLI prediction of a 3-way model on the premise/hypothesis input.
    pub fn predict_label(&self, example: &Example) -> Result<Label> {
        if self.num_classes != 3 {
            return Err(Error::Validation("predict_label needs a 3-way model".into()));
        }
        let idx = self.predict_tokens(&concat_input(example)?)?;
        Ok(Label::from_index(idx).expect("3-way index"))
    }

    /// d(score[class_index]) / d(embedded_input); every row is identical
    /// because pooling is a mean.
    pub fn gradient_wrt_embeddings(
        &self,
        embedded: ArrayView2<'_, f64>,
        class_index: usize,
    ) -> Result<Array2<f64>> {
        self.check_input(embedded)?;
        if class_index >= self.num_classes {
            return Err(Error::IndexOutOfRange {
                index: class_index,
                len: self.num_classes,
            });
        }
        let n = embedded.nrows();
        let pooled = Self::pool(embedded);
        let mut delta = Array1::zeros(self.num_classes);
        delta[class_index] = 1.0;
        let d_pooled = self.head.backward(pooled.view(), delta.view(), None) / n as f64;
        let mut out = Array2::zeros((n, self.dim()));
        for mut row in out.axis_iter_mut(Axis(0)) {
            row.assign(&d_pooled);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, &self.to_json_bytes()?)
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: Classifier = io::read_json(path)?;
        // re-run the shape checks on whatever came off disk
        let training = model.training.clone();
        let mut checked = Classifier::new(model.embedding, model.head, model.rng_seed)?;
        checked.training = training;
        if checked.embedding.row(checked.embedding.pad_index()).iter().any(|&v| v != 0.0) {
            return Err(Error::Validation("checkpoint pad embedding is not zero".into()));
        }
        Ok(checked)
    }
}

pub(crate) fn argmax(values: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Input sequence of the explanation-informed model: premise, hypothesis, explanation.
pub fn informed_input(example: &Example, explanation: &str) -> Result<TokenSequence> {
    let input = concat_input(example)?;
    let expl = tokenize(explanation);
    if expl.is_empty() {
        return Err(Error::Validation(format!("example {}: empty explanation", example.id)));
    }
    Ok(TokenSequence::concat(&[&input, &expl]))
}

struct Instance {
    token_ids: Vec<usize>,
    label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub dev_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingMetrics {
    pub epochs: Vec<EpochMetrics>,
}

fn check_trainable(corpus: &Corpus, task: Task) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::Validation("training corpus is empty".into()));
    }
    if task == Task::ExplanationInformed6Way {
        if let Some(bad) = corpus.iter().find(|e| !e.has_explanation()) {
            return Err(Error::Validation(format!(
                "6-way training needs an explanation for every example; {:?} has none",
                bad.id
            )));
        }
        if corpus.len() < 2 {
            return Err(Error::Validation(
                "6-way training needs at least 2 examples to draw mismatched explanations".into(),
            ));
        }
    }
    Ok(())
}

/// Uniform index in `0..n` other than `own`.
pub(crate) fn other_index(rng: &mut impl Rng, n: usize, own: usize) -> usize {
    let j = rng.random_range(0..n - 1);
    if j >= own {
        j + 1
    } else {
        j
    }
}

fn epoch_instances(
    model: &Classifier,
    corpus: &Corpus,
    task: Task,
    mismatch_rng: &mut impl Rng,
) -> Result<Vec<Instance>> {
    let ids = |seq: &TokenSequence| seq.iter().map(|t| model.embedding.index_of(t)).collect();
    let examples = corpus.examples();
    let mut out = Vec::with_capacity(examples.len() * 2);
    for (i, e) in examples.iter().enumerate() {
        match task {
            Task::Nli3Way => out.push(Instance {
                token_ids: ids(&concat_input(e)?),
                label: e.gold_label.index(),
            }),
            Task::ExplanationInformed6Way => {
                out.push(Instance {
                    token_ids: ids(&informed_input(e, &e.explanation)?),
                    label: SixWayLabel {
                        nli_label: e.gold_label,
                        explanation_matched: true,
                    }
                    .index(),
                });
                let j = other_index(mismatch_rng, examples.len(), i);
                out.push(Instance {
                    token_ids: ids(&informed_input(e, &examples[j].explanation)?),
                    label: SixWayLabel {
                        nli_label: e.gold_label,
                        explanation_matched: false,
                    }
                    .index(),
                });
            }
        }
    }
    Ok(out)
}

pub fn train(corpus: &Corpus, config: &TrainingConfig) -> Result<(Classifier, TrainingMetrics)> {
    train_with_dev(corpus, None, config)
}

/// Mini-batch gradient descent on mean cross-entropy.
///
/// Deterministic in `(corpus, config)`: parameter init, batch order and
/// mismatched-explanation draws each use their own stream of `config.seed`.
pub fn train_with_dev(
    corpus: &Corpus,
    dev: Option<&Corpus>,
    config: &TrainingConfig,
) -> Result<(Classifier, TrainingMetrics)> {
    config.validate()?;
    check_trainable(corpus, config.task)?;

    let mut init_rng = rng::stream(config.seed, Stream::ParameterInit);
    let mut shuffle_rng = rng::stream(config.seed, Stream::BatchShuffle);
    let mut mismatch_rng = rng::stream(config.seed, Stream::MismatchSampling);

    let mut words: Vec<String> = Vec::new();
    for e in corpus {
        words.extend(tokenize(&e.premise).tokens().iter().cloned());
        words.extend(tokenize(&e.hypothesis).tokens().iter().cloned());
        if config.task == Task::ExplanationInformed6Way {
            words.extend(tokenize(&e.explanation).tokens().iter().cloned());
        }
    }
    let embedding = EmbeddingTable::build(words.iter().map(String::as_str), config.dim, &mut init_rng)?;
    let mut model = Classifier::initialize(
        embedding,
        config.architecture,
        config.task.num_classes(),
        config.hidden,
        config.seed,
        &mut init_rng,
    )?;

    let mut metrics = TrainingMetrics::default();
    for epoch in 0..config.epochs {
        let mut instances = epoch_instances(&model, corpus, config.task, &mut mismatch_rng)?;
        instances.shuffle(&mut shuffle_rng);

        let mut total_loss = 0.0;
        let mut correct = 0usize;
        for batch in instances.chunks(config.batch_size) {
            let (loss, hits) = model.step(batch, config.learning_rate);
            total_loss += loss;
            correct += hits;
        }
        let dev_accuracy = match dev {
            Some(d) => Some(accuracy(&model, d, config.task, config.seed)?),
            None => None,
        };
        metrics.epochs.push(EpochMetrics {
            epoch: epoch + 1,
            mean_loss: total_loss / instances.len() as f64,
            train_accuracy: correct as f64 / instances.len() as f64,
            dev_accuracy,
        });
    }
    model.training = Some(config.clone());
    Ok((model, metrics))
}

impl Classifier {
    /// One gradient step on a batch; returns (summed loss, correct count) measured before the update.
    fn step(&mut self, batch: &[Instance], learning_rate: f64) -> (f64, usize) {
        let mut head_grad = self.head.zeros_like();
        let mut emb_grad: BTreeMap<usize, Array1<f64>> = BTreeMap::new();
        let mut loss = 0.0;
        let mut correct = 0;

        for inst in batch {
            let n = inst.token_ids.len() as f64;
            let mut pooled = Array1::zeros(self.dim());
            for &id in &inst.token_ids {
                pooled += &self.embedding.row(id);
            }
            pooled /= n;
            let probs = softmax(self.head.scores(pooled.view()).view());
            loss -= probs[inst.label].max(f64::MIN_POSITIVE).ln();
            if argmax(probs.view()) == inst.label {
                correct += 1;
            }
            let mut delta = probs;
            delta[inst.label] -= 1.0;
            let d_pooled = self.head.backward(pooled.view(), delta.view(), Some(&mut head_grad)) / n;
            for &id in &inst.token_ids {
                emb_grad
                    .entry(id)
                    .or_insert_with(|| Array1::zeros(self.dim()))
                    .scaled_add(1.0, &d_pooled);
            }
        }

        let step = learning_rate / batch.len() as f64;
        self.head.descend(&head_grad, step);
        let pad = self.embedding.pad_index;
        for (id, g) in emb_grad {
            if id != pad {
                self.embedding.weights.row_mut(id).scaled_add(-step, &g);
            }
        }
        (loss, correct)
    }
}

/// Accuracy on the task the model was trained for. For the 6-way task every
/// example is scored twice (matched and mismatched explanation).
pub fn accuracy(model: &Classifier, corpus: &Corpus, task: Task, seed: u64) -> Result<f64> {
    match task {
        Task::Nli3Way => {
            if corpus.is_empty() {
                return Err(Error::Validation("accuracy on empty corpus".into()));
            }
            let mut hits = 0;
            for e in corpus {
                if model.predict_label(e)? == e.gold_label {
                    hits += 1;
                }
            }
            Ok(hits as f64 / corpus.len() as f64)
        }
        Task::ExplanationInformed6Way => Ok(evaluate_six_way(model, corpus, seed)?.joint_accuracy),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SixWayEvaluation {
    /// Exact 6-way class accuracy.
    pub joint_accuracy: f64,
    /// Accuracy of the matched/mismatched bit alone.
    pub matched_accuracy: f64,
    /// Accuracy of the NLI part alone.
    pub nli_accuracy: f64,
    pub instances: usize,
}

/// Scores each example once with its own explanation and once with an
/// explanation drawn from another example.
pub fn evaluate_six_way(model: &Classifier, corpus: &Corpus, seed: u64) -> Result<SixWayEvaluation> {
    if model.num_classes() != 6 {
        return Err(Error::Validation("six-way evaluation needs a 6-way model".into()));
    }
    check_trainable(corpus, Task::ExplanationInformed6Way)?;
    let mut rng = rng::stream(seed, Stream::Evaluation);
    let examples = corpus.examples();
    let (mut joint, mut matched, mut nli, mut total) = (0, 0, 0, 0);
    for (i, e) in examples.iter().enumerate() {
        let j = other_index(&mut rng, examples.len(), i);
        for (expl, is_matched) in [(&e.explanation, true), (&examples[j].explanation, false)] {
            let truth = SixWayLabel {
                nli_label: e.gold_label,
                explanation_matched: is_matched,
            };
            let pred = SixWayLabel::from_index(model.predict_tokens(&informed_input(e, expl)?)?)
                .expect("6-way index");
            joint += usize::from(pred == truth);
            matched += usize::from(pred.explanation_matched == truth.explanation_matched);
            nli += usize::from(pred.nli_label == truth.nli_label);
            total += 1;
        }
    }
    let t = total as f64;
    Ok(SixWayEvaluation {
        joint_accuracy: joint as f64 / t,
        matched_accuracy: matched as f64 / t,
        nli_accuracy: nli as f64 / t,
        instances: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_model(arch: Architecture, classes: usize, seed: u64) -> Classifier {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words = ["alpha", "beta", "gamma", "delta"];
        let mut emb = EmbeddingTable::build(words, 5, &mut rng).unwrap();
        // push embeddings away from zero so the tanh layer is not near-linear
        for i in 1..emb.vocab_len() {
            let row: Array1<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            emb.set_row(i, row.view()).unwrap();
        }
        let mut model = Classifier::initialize(emb, arch, classes, 7, seed, &mut rng).unwrap();
        if let Head::MeanEmbeddingMlp { hidden_weight, output_weight, .. } = &mut model.head {
            hidden_weight.mapv_inplace(|v| v * 10.0);
            output_weight.mapv_inplace(|v| v * 10.0);
        }
        model
    }

    fn hand_linear() -> Classifier {
        let emb = EmbeddingTable::from_rows(
            &["x", "y"],
            array![[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 2.0], [3.0, -1.0]],
        )
        .unwrap();
        let head = Head::BagOfEmbeddingsLinear {
            weight: array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
            bias: array![0.0, 0.0, 0.0],
        };
        Classifier::new(emb, head, 0).unwrap()
    }

    #[test]
    fn zero_input_gives_uniform() {
        let m = hand_linear();
        let p = m.forward(Array2::zeros((3, 2)).view()).unwrap();
        for &v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_computed_softmax() {
        // mean([1,2],[3,-1]) = [2, 0.5]; W·mean = [2, 0.5, 2.5]
        let m = hand_linear();
        let e = array![[1.0, 2.0], [3.0, -1.0]];
        let p = m.forward(e.view()).unwrap();
        let z = [2.0f64.exp(), 0.5f64.exp(), 2.5f64.exp()];
        let total: f64 = z.iter().sum();
        for k in 0..3 {
            assert!((p[k] - z[k] / total).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_gradient_is_weight_row_over_n() {
        let m = hand_linear();
        let e = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]];
        let g = m.gradient_wrt_embeddings(e.view(), 2).unwrap();
        for row in g.rows() {
            assert_eq!(row.to_vec(), vec![1.0 / 3.0, 1.0 / 3.0]);
        }
        assert!(matches!(
            m.gradient_wrt_embeddings(e.view(), 3),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
        assert!(matches!(m.scores(Array2::zeros((2, 3)).view()), Err(Error::Shape { .. })));
    }

    #[test]
    fn zero_hidden_weights_disconnect_input() {
        let mut m = random_model(Architecture::MeanEmbeddingMlp, 3, 1);
        if let Head::MeanEmbeddingMlp { hidden_weight, .. } = &mut m.head {
            hidden_weight.fill(0.0);
        }
        let e = m.embed(&tokenize("alpha beta gamma"));
        let g = m.gradient_wrt_embeddings(e.view(), 1).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_match_central_differences() {
        let h = 1e-4;
        for arch in [Architecture::BagOfEmbeddingsLinear, Architecture::MeanEmbeddingMlp] {
            for case in 0..20u64 {
                let m = random_model(arch, if case % 2 == 0 { 3 } else { 6 }, case);
                let mut rng = ChaCha8Rng::seed_from_u64(100 + case);
                let n = rng.random_range(1..6);
                let x = Array2::from_shape_simple_fn((n, 5), || rng.random_range(-1.0..1.0));
                let class = rng.random_range(0..m.num_classes());
                let analytic = m.gradient_wrt_embeddings(x.view(), class).unwrap();
                let mut fd = Array2::zeros(x.raw_dim());
                for idx in ndarray::indices(x.raw_dim()) {
                    let mut plus = x.clone();
                    plus[idx] += h;
                    let mut minus = x.clone();
                    minus[idx] -= h;
                    fd[idx] = (m.scores(plus.view()).unwrap()[class]
                        - m.scores(minus.view()).unwrap()[class])
                        / (2.0 * h);
                }
                let diff = (&analytic - &fd).mapv(|v| v * v).sum().sqrt();
                let scale = analytic.mapv(|v| v * v).sum().sqrt().max(fd.mapv(|v| v * v).sum().sqrt());
                assert!(diff / scale < 1e-5, "{arch:?} case {case}: rel err {}", diff / scale);
            }
        }
    }

    #[test]
    fn embed_lookups() {
        let m = random_model(Architecture::BagOfEmbeddingsLinear, 3, 3);
        let e = m.embed(&tokenize("alpha zzz alpha"));
        assert_eq!(e.row(0), e.row(2));
        assert_eq!(e.row(1), m.embedding().row(m.embedding().unk_index()));
        assert!(m.embedding().row(m.embedding().pad_index()).iter().all(|&v| v == 0.0));
        let seq = TokenSequence::concat(&[&tokenize("Alpha"), &tokenize("beta")]);
        let e = m.embed(&seq);
        assert_eq!(e.row(1), m.embedding().row(m.embedding().sep_index()));
        assert_eq!(e.row(0), m.embed(&tokenize("alpha")).row(0));
    }

    #[test]
    fn softmax_sums_to_one_and_order_invariant() {
        for arch in [Architecture::BagOfEmbeddingsLinear, Architecture::MeanEmbeddingMlp] {
            let m = random_model(arch, 6, 9);
            let a = m.embed(&TokenSequence::concat(&[&tokenize("alpha beta"), &tokenize("gamma")]));
            let b = m.embed(&TokenSequence::concat(&[&tokenize("gamma"), &tokenize("beta alpha")]));
            let (pa, pb) = (m.forward(a.view()).unwrap(), m.forward(b.view()).unwrap());
            assert!((pa.sum() - 1.0).abs() < 1e-9);
            assert!(pa.iter().all(|&v| v > 0.0 && v < 1.0));
            for k in 0..6 {
                assert!((pa[k] - pb[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn six_way_labels_biject() {
        let mut seen = BTreeSet::new();
        for label in Label::ALL {
            for matched in [true, false] {
                let l = SixWayLabel {
                    nli_label: label,
                    explanation_matched: matched,
                };
                assert_eq!(SixWayLabel::from_index(l.index()), Some(l));
                seen.insert(l.index());
            }
        }
        assert_eq!(seen, (0..6).collect());
        assert_eq!(SixWayLabel::from_index(6), None);
    }

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let m = random_model(Architecture::MeanEmbeddingMlp, 6, 4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let loaded = Classifier::load(&path).unwrap();
        assert_eq!(loaded, m);
        assert_eq!(loaded.to_json_bytes().unwrap(), std::fs::read(&path).unwrap());
    }

    #[test]
    fn training_rejects_bad_corpora() {
        let empty = Corpus::new("e", vec![]).unwrap();
        assert!(matches!(train(&empty, &TrainingConfig::default()), Err(Error::Validation(_))));
        let one = Corpus::new(
            "x",
            vec![Example {
                id: "only".into(),
                premise: "a".into(),
                hypothesis: "b".into(),
                gold_label: Label::Neutral,
                explanation: String::new(),
                model_prediction: None,
            }],
        )
        .unwrap();
        let cfg = TrainingConfig {
            task: Task::ExplanationInformed6Way,
            ..TrainingConfig::default()
        };
        let err = train(&one, &cfg).unwrap_err();
        assert!(err.to_string().contains("only"), "{err}");
    }
}
