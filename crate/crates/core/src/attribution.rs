//! Integrated gradients over token embeddings.
//!
//! Model importance of a token is the absolute value of its integrated-gradient
//! attribution toward the gold class, where a token's attribution is the sum of
//! its embedding coordinates' attributions. The path integral uses the midpoint
//! rule on the straight line from the baseline to the input.

use ndarray::{Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::corpus::{concat_input, Example, TokenSequence};
use crate::error::{Error, Result};
use crate::model::Classifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    #[default]
    ZeroEmbedding,
    /// Every position replaced by the pad row (all zeros by construction).
    PadEmbedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionTarget {
    #[default]
    GoldLabel,
    PredictedLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IgConfig {
    pub steps: usize,
    pub baseline: Baseline,
    pub target: AttributionTarget,
}

impl Default for IgConfig {
    fn default() -> Self {
        Self {
            steps: 256,
            baseline: Baseline::ZeroEmbedding,
            target: AttributionTarget::GoldLabel,
        }
    }
}

/// Raw (signed) attributions for every position of a sequence, separators included.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedAttribution {
    pub per_token: Vec<f64>,
    /// `F(x) - F(x')` for the target score.
    pub score_difference: f64,
    /// `|sum(per_token) - score_difference|`
    pub completeness_gap: f64,
}

/// Per-token |IG| for the natural-language tokens of one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    #[serde(rename = "id")]
    pub example_id: String,
    pub target_class: usize,
    pub per_token: Vec<f64>,
    pub completeness_gap: f64,
}

pub fn baseline_matrix(model: &Classifier, n: usize, baseline: Baseline) -> Array2<f64> {
    let mut out = Array2::zeros((n, model.dim()));
    if baseline == Baseline::PadEmbedding {
        let pad = model.embedding().row(model.embedding().pad_index());
        for mut row in out.axis_iter_mut(Axis(0)) {
            row.assign(&pad);
        }
    }
    out
}

/// IG on an already-embedded input against an explicit baseline.
pub fn integrated_gradients_embedded(
    model: &Classifier,
    input: ArrayView2<'_, f64>,
    baseline: ArrayView2<'_, f64>,
    target_class: usize,
    steps: usize,
) -> Result<SignedAttribution> {
    if input.nrows() == 0 {
        return Err(Error::Validation("integrated gradients on zero tokens".into()));
    }
    if steps == 0 {
        return Err(Error::Validation("IG steps must be at least 1".into()));
    }
    if input.shape() != baseline.shape() {
        return Err(Error::Shape {
            expected: format!("{:?}", input.shape()),
            actual: format!("{:?}", baseline.shape()),
        });
    }
    let delta = &input - &baseline;
    let mut grad_sum = Array2::<f64>::zeros(input.raw_dim());
    for k in 0..steps {
        let alpha = (k as f64 + 0.5) / steps as f64;
        let point = &baseline + &(alpha * &delta);
        grad_sum += &model.gradient_wrt_embeddings(point.view(), target_class)?;
    }

    let mut coords = Array2::<f64>::zeros(input.raw_dim());
    Zip::from(&mut coords)
        .and(&delta)
        .and(&grad_sum)
        .for_each(|c, &d, &g| *c = d * g / steps as f64);
    let per_token: Vec<f64> = coords.sum_axis(Axis(1)).to_vec();

    let score_difference =
        model.scores(input)?[target_class] - model.scores(baseline)?[target_class];
    let total: f64 = per_token.iter().sum();
    Ok(SignedAttribution {
        per_token,
        score_difference,
        completeness_gap: (total - score_difference).abs(),
    })
}

pub fn integrated_gradients(
    model: &Classifier,
    tokens: &TokenSequence,
    target_class: usize,
    config: &IgConfig,
) -> Result<SignedAttribution> {
    if tokens.is_empty() {
        return Err(Error::Validation("integrated gradients on zero tokens".into()));
    }
    let input = model.embed(tokens);
    let baseline = baseline_matrix(model, tokens.len(), config.baseline);
    integrated_gradients_embedded(model, input.view(), baseline.view(), target_class, config.steps)
}

pub(crate) fn absolute_at(signed: &SignedAttribution, positions: &[usize]) -> Vec<f64> {
    positions.iter().map(|&i| signed.per_token[i].abs()).collect()
}

/// |IG| toward the configured target, restricted to non-separator tokens.
pub fn model_importance(
    model: &Classifier,
    example: &Example,
    config: &IgConfig,
) -> Result<AttributionVector> {
    if model.num_classes() != 3 {
        return Err(Error::Validation(
            "model importance needs a 3-way NLI classifier".into(),
        ));
    }
    let tokens = concat_input(example)?;
    let target_class = match config.target {
        AttributionTarget::GoldLabel => example.gold_label.index(),
        AttributionTarget::PredictedLabel => model.predict_tokens(&tokens)?,
    };
    let signed = integrated_gradients(model, &tokens, target_class, config)?;
    Ok(AttributionVector {
        example_id: example.id.clone(),
        target_class,
        per_token: absolute_at(&signed, &tokens.content_positions()),
        completeness_gap: signed.completeness_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Label};
    use crate::model::{Architecture, EmbeddingTable, Head};
    use ndarray::{array, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_model() -> Classifier {
        let emb = EmbeddingTable::from_rows(
            &["dog", "cat", "runs"],
            array![
                [0.0, 0.0],
                [0.0, 0.0],
                [0.3, -0.2],
                [1.0, 2.0],
                [-0.5, 0.25],
                [2.0, 1.0]
            ],
        )
        .unwrap();
        let head = Head::BagOfEmbeddingsLinear {
            weight: array![[1.0, -1.0], [0.5, 0.5], [-2.0, 1.0]],
            bias: array![0.1, 0.2, 0.3],
        };
        Classifier::new(emb, head, 0).unwrap()
    }

    fn example(premise: &str, hypothesis: &str) -> Example {
        Example {
            id: "e1".into(),
            premise: premise.into(),
            hypothesis: hypothesis.into(),
            gold_label: Label::Contradiction,
            explanation: String::new(),
            model_prediction: None,
        }
    }

    #[test]
    fn linear_closed_form_any_steps() {
        let m = linear_model();
        let tokens = TokenSequence::concat(&[&tokenize("dog cat"), &tokenize("runs")]);
        let x = m.embed(&tokens);
        let n = tokens.len() as f64;
        for steps in [1, 2, 7, 256] {
            let cfg = IgConfig { steps, ..IgConfig::default() };
            for class in 0..3 {
                let w = match m.head() {
                    Head::BagOfEmbeddingsLinear { weight, .. } => weight.row(class).to_owned(),
                    _ => unreachable!(),
                };
                let ig = integrated_gradients(&m, &tokens, class, &cfg).unwrap();
                for (i, row) in x.rows().into_iter().enumerate() {
                    let expected = row.dot(&w) / n;
                    assert!((ig.per_token[i] - expected).abs() < 1e-9);
                }
                assert!(ig.completeness_gap < 1e-9);
            }
        }
    }

    #[test]
    fn input_equal_to_baseline() {
        let m = linear_model();
        let z = Array2::zeros((3, 2));
        let ig = integrated_gradients_embedded(&m, z.view(), z.view(), 1, 16).unwrap();
        assert!(ig.per_token.iter().all(|&v| v == 0.0));
        assert_eq!(ig.completeness_gap, 0.0);
    }

    #[test]
    fn rejects_empty_and_zero_steps() {
        let m = linear_model();
        assert!(integrated_gradients(&m, &tokenize(""), 0, &IgConfig::default()).is_err());
        let cfg = IgConfig { steps: 0, ..IgConfig::default() };
        assert!(integrated_gradients(&m, &tokenize("dog"), 0, &cfg).is_err());
    }

    #[test]
    fn importance_drops_separator_and_is_absolute() {
        let m = linear_model();
        let e = example("dog cat .", "runs");
        let v = model_importance(&m, &e, &IgConfig::default()).unwrap();
        assert_eq!(v.per_token.len(), 4);
        assert_eq!(v.target_class, Label::Contradiction.index());
        assert!(v.per_token.iter().all(|&a| a >= 0.0));
        // "cat" -> [-0.5, 0.25] · [0.5, 0.5] / 5 = -0.025
        assert!((v.per_token[1] - 0.025).abs() < 1e-12);
    }

    #[test]
    fn zero_unk_rows_get_zero_importance() {
        let mut m = linear_model();
        let unk = m.embedding().unk_index();
        m.embedding_mut()
            .set_row(unk, Array1::zeros(2).view())
            .unwrap();
        let v = model_importance(&m, &example("zebra quokka", "wombat"), &IgConfig::default()).unwrap();
        assert!(v.per_token.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn mlp_completeness_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let emb = EmbeddingTable::build(["a", "b", "c", "d", "e"], 6, &mut rng).unwrap();
        let mut m = Classifier::initialize(emb, Architecture::MeanEmbeddingMlp, 3, 8, 0, &mut rng).unwrap();
        for i in 1..m.embedding().vocab_len() {
            let row: Array1<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            m.embedding_mut().set_row(i, row.view()).unwrap();
        }
        let tokens = tokenize("a b c d e a");
        let cfg = IgConfig { steps: 512, ..IgConfig::default() };
        let ig = integrated_gradients(&m, &tokens, 2, &cfg).unwrap();
        assert!(ig.completeness_gap <= 1e-3 * (1.0 + ig.score_difference.abs()));
        assert_eq!(ig, integrated_gradients(&m, &tokens, 2, &cfg).unwrap());
    }
}
