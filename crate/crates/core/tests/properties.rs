//! Cross-module invariants as property tests.

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use importance_alignment::alignment::{align_example, delta_a, DEFAULT_FISHER_EPSILON};
use importance_alignment::attribution::{integrated_gradients_embedded, model_importance, IgConfig};
use importance_alignment::corpus::{concat_input, tokenize, StopWordList};
use importance_alignment::model::{softmax, train, Classifier, EmbeddingTable, Head, TrainingConfig};
use importance_alignment::oracle::{
    expert_oracle, hard_oracle, overlap, random_pairing, soft_oracle, ExpertAnnotationSet, ExplanationRef, OracleKind,
    OracleVector, Scoring,
};
use importance_alignment::synthetic::{generate, SyntheticConfig};

fn matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..scale))
}

fn vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || rng.random_range(-scale..scale))
}

fn model(seed: u64, mlp: bool) -> Classifier {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(2..6);
    let mut rows = matrix(&mut rng, 5, dim, 1.0);
    rows.row_mut(0).fill(0.0);
    let embedding = EmbeddingTable::from_rows(&["a", "b"], rows).unwrap();
    let head = if mlp {
        let hidden = rng.random_range(2..8);
        Head::MeanEmbeddingMlp {
            hidden_weight: matrix(&mut rng, hidden, dim, 1.5),
            hidden_bias: vector(&mut rng, hidden, 0.5),
            output_weight: matrix(&mut rng, 3, hidden, 1.5),
            output_bias: vector(&mut rng, 3, 0.5),
        }
    } else {
        Head::BagOfEmbeddingsLinear { weight: matrix(&mut rng, 3, dim, 1.5), bias: vector(&mut rng, 3, 0.5) }
    };
    Classifier::new(embedding, head, seed).unwrap()
}

fn oracle(id: &str, scoring: Scoring, per_token: Vec<f64>) -> OracleVector {
    OracleVector { example_id: id.into(), kind: OracleKind::Hard, scoring, explanation_id: id.into(), per_token }
}

#[test]
fn ig_gap_shrinks_as_steps_double() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mean_gap = [0.0; 4];
    for case in 0..60 {
        let m = model(case, true);
        let n = rng.random_range(1..10);
        let x = matrix(&mut rng, n, m.dim(), 2.0);
        let x0 = Array2::zeros(x.raw_dim());
        for (slot, steps) in [32, 64, 128, 256].into_iter().enumerate() {
            mean_gap[slot] += integrated_gradients_embedded(&m, x.view(), x0.view(), 0, steps).unwrap().completeness_gap / 60.0;
        }
    }
    assert!(mean_gap.windows(2).all(|w| w[1] <= w[0]), "{mean_gap:?}");
}

#[test]
fn training_is_deterministic() {
    let corpus = generate(&SyntheticConfig { examples: 40, ..Default::default() }).unwrap();
    for config in [TrainingConfig::default(), TrainingConfig::informed_default()] {
        let (a, _) = train(&corpus, &config).unwrap();
        let (b, _) = train(&corpus, &config).unwrap();
        assert_eq!(a.to_json_bytes().unwrap(), b.to_json_bytes().unwrap());
    }
}

#[test]
fn oracle_and_model_vectors_share_length() {
    let corpus = generate(&SyntheticConfig { examples: 30, seed: 4, ..Default::default() }).unwrap();
    let (nli, _) = train(&corpus, &TrainingConfig::default()).unwrap();
    let (informed, _) = train(&corpus, &TrainingConfig::informed_default()).unwrap();
    let stops = StopWordList::english();
    let ig = IgConfig { steps: 8, ..IgConfig::default() };
    let pairing = random_pairing(&corpus, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    for e in &corpus {
        let other = corpus.get(&pairing[&e.id]).unwrap();
        let importance = model_importance(&nli, e, &ig).unwrap();
        assert_eq!(importance.per_token.len(), concat_input(e).unwrap().content_len());
        assert!(importance.per_token.iter().all(|&v| v >= 0.0));
        for expl in [e, other] {
            let hard = hard_oracle(e, ExplanationRef::of(expl), &stops).unwrap();
            let soft = soft_oracle(&informed, e, ExplanationRef::of(expl), &ig, true).unwrap();
            assert_eq!(hard.per_token.len(), importance.per_token.len());
            assert_eq!(soft.per_token.len(), importance.per_token.len());
            assert!(hard.per_token.iter().all(|&v| v == 0.0 || v == 1.0));
            assert!(soft.per_token.iter().all(|&v| v >= 0.0));
            assert_eq!(hard.explanation_id, expl.id);
            assert_eq!(soft.explanation_id, expl.id);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_sums_to_one(scores in proptest::collection::vec(-700.0f64..700.0, 1..8)) {
        let p = softmax(Array1::from(scores).view());
        prop_assert!((p.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bag_models_ignore_token_order(seed in 0u64..1000, mlp: bool, n in 1usize..10) {
        let m = model(seed, mlp);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let x = matrix(&mut rng, n, m.dim(), 2.0);
        let mut order: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let permuted = x.select(ndarray::Axis(0), &order);
        let a = m.scores(x.view()).unwrap();
        let b = m.scores(permuted.view()).unwrap();
        prop_assert!((&a - &b).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn hard_oracle_has_set_semantics(
        input in proptest::collection::vec("[a-d]{1,2}", 1..10),
        expl in proptest::collection::vec("[a-dA-D]{1,2}", 1..8),
        seed: u64,
    ) {
        let stops = StopWordList::parse("a\nbb\n", "test");
        let input = tokenize(&input.join(" "));
        let base = overlap(&input, &tokenize(&expl.join(" ")), &stops).unwrap();
        let mut shuffled = expl.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        let doubled: Vec<String> = shuffled.iter().chain(&expl).cloned().collect();
        let upper: Vec<String> = expl.iter().map(|w| w.to_uppercase()).collect();
        prop_assert_eq!(&overlap(&input, &tokenize(&shuffled.join(" ")), &stops).unwrap(), &base);
        prop_assert_eq!(&overlap(&input, &tokenize(&doubled.join(" ")), &stops).unwrap(), &base);
        prop_assert_eq!(&overlap(&input, &tokenize(&upper.join(" ")), &stops).unwrap(), &base);
    }

    #[test]
    fn expert_oracle_ignores_annotator_order(
        votes in proptest::collection::vec(proptest::collection::vec(0u8..2, 6), 1..6),
        seed: u64,
    ) {
        let n = votes.len();
        let set = ExpertAnnotationSet {
            example_id: "x".into(),
            annotator_ids: (0..n).map(|i| format!("a{i}")).collect(),
            annotators: votes.clone(),
        };
        let mut order: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        let permuted = ExpertAnnotationSet {
            example_id: "x".into(),
            annotator_ids: order.iter().map(|&i| set.annotator_ids[i].clone()).collect(),
            annotators: order.iter().map(|&i| votes[i].clone()).collect(),
        };
        let a = expert_oracle(&set).unwrap().per_token;
        prop_assert_eq!(&a, &expert_oracle(&permuted).unwrap().per_token);
        for v in a {
            let k = v * n as f64;
            prop_assert!((k - k.round()).abs() < 1e-12 && (0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn delta_a_is_zero_when_random_equals_matched(
        vectors in proptest::collection::vec((proptest::collection::vec(0.0f64..5.0, 3..12), any::<u64>()), 2..20),
    ) {
        let mut records = Vec::new();
        for (i, (importance, seed)) in vectors.iter().enumerate() {
            let id = format!("e{i}");
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let o: Vec<f64> = importance.iter().map(|_| rng.random_range(0.0..1.0)).collect();
            let a = importance_alignment::attribution::AttributionVector {
                example_id: id.clone(),
                target_class: 0,
                per_token: importance.clone(),
                completeness_gap: 0.0,
            };
            records.push(align_example(&a, &oracle(&id, Scoring::Matched, o.clone()), &oracle(&id, Scoring::Random, o), DEFAULT_FISHER_EPSILON).unwrap());
        }
        if records.iter().filter(|r| r.is_used()).count() >= 2 {
            let report = delta_a(&records, "m", OracleKind::Hard, 0).unwrap();
            prop_assert_eq!(report.delta_a, 0.0);
            prop_assert_eq!(report.mean_diff_fisher, 0.0);
        }
    }

    #[test]
    fn skipped_records_change_nothing_but_the_count(
        diffs in proptest::collection::vec((-0.99f64..0.99, -0.99f64..0.99), 2..15),
        extra in 1usize..5,
    ) {
        let make = |i: usize, per_token: Vec<f64>, m: Vec<f64>, r: Vec<f64>| {
            let id = format!("e{i:03}");
            let a = importance_alignment::attribution::AttributionVector { example_id: id.clone(), target_class: 0, per_token, completeness_gap: 0.0 };
            align_example(&a, &oracle(&id, Scoring::Matched, m), &oracle(&id, Scoring::Random, r), DEFAULT_FISHER_EPSILON).unwrap()
        };
        // Constant importance below makes the extra records zero_variance_model skips.
        let records: Vec<_> = diffs
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| make(i, vec![0.0, 1.0, 2.0], vec![0.0, 1.0 + a, 2.0], vec![0.0, 1.0 + b, 2.0]))
            .collect();
        let base = delta_a(&records, "m", OracleKind::Hard, 0).unwrap();
        let mut with_skips = records.clone();
        for k in 0..extra {
            with_skips.push(make(100 + k, vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]));
        }
        let more = delta_a(&with_skips, "m", OracleKind::Hard, 0).unwrap();
        prop_assert_eq!(more.n_used, base.n_used);
        prop_assert_eq!(more.n_skipped, base.n_skipped + extra);
        prop_assert_eq!(more.mean_diff_fisher, base.mean_diff_fisher);
        prop_assert_eq!(more.t_statistic, base.t_statistic);
        prop_assert_eq!(more.delta_a, more.mean_diff_fisher.tanh());
    }

    #[test]
    fn random_pairing_has_no_fixed_points(examples in 2usize..40, seed: u64) {
        let corpus = generate(&SyntheticConfig { examples, seed, ..Default::default() }).unwrap();
        let pairing = random_pairing(&corpus, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(pairing.len(), examples);
        prop_assert!(pairing.iter().all(|(k, v)| k != v && corpus.get(v).is_some()));
        prop_assert_eq!(pairing, random_pairing(&corpus, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap());
    }
}
