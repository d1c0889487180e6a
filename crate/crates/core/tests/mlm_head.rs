mod common;

use proptest::prelude::*;

use common::{numeric_grad, relative_error};
use lexlens::datastore::{write_bundle, EmbeddingStore, Similarity, Tensor, TensorBundle};
use lexlens::mlm_head::{project_store, Activation, MlmHeadParams, VocabProjection};
use lexlens::synthetic::{gaussian_head, gaussian_vector, random_head, rng, HeadShape};

/// d = 2, |V| = 3 head. For h = (1, −1) both activations give a centered
/// ±δ pair, so LayerNorm yields (1, −1) up to eps, gamma (2, 1) and beta
/// (0, 0.5) give y = (2, −0.5), and V = [[1,0],[0,1],[1,1]] with bias
/// (0, 0, 0.25) gives logits (2, −0.5, 1.75).
fn tiny_bundle(activation: &str) -> TensorBundle {
    let mut b = TensorBundle::new();
    b.insert("transform.weight", Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]))
        .insert("transform.bias", Tensor::vector(vec![0.0, 0.0]))
        .insert("layernorm.gamma", Tensor::vector(vec![2.0, 1.0]))
        .insert("layernorm.beta", Tensor::vector(vec![0.0, 0.5]))
        .insert("decoder.weight", Tensor::new(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]))
        .insert("decoder.bias", Tensor::vector(vec![0.0, 0.0, 0.25]));
    b.set_meta("activation", activation).set_meta("eps", "1e-12");
    b
}

#[test]
fn tiny_head_matches_hand_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let expect = [2.0, -0.5, 1.75];
    let z: f64 = expect.iter().map(|l: &f64| l.exp()).sum();
    for activation in ["gelu", "identity"] {
        let base = dir.path().join(activation);
        write_bundle(&tiny_bundle(activation), &base).unwrap();
        let head = MlmHeadParams::load(&base).unwrap();
        assert_eq!((head.dim(), head.vocab_size()), (2, 3));
        let proj = head.forward(&[1.0, -1.0]).unwrap();
        for (got, want) in proj.logits().iter().zip(expect) {
            assert!((got - want).abs() < 1e-9, "{activation}: {got} vs {want}");
        }
        for (t, p) in proj.probs().iter().enumerate() {
            assert!((p - expect[t].exp() / z).abs() < 1e-9);
        }
        assert_eq!(proj.ranked_ids(), vec![0, 2, 1]);
        let trace = head.forward_trace(&[1.0, -1.0]).unwrap();
        assert!((trace.cross_entropy(2) - (z.ln() - 1.75)).abs() < 1e-9);
        // A two-dimensional LayerNorm output is saturated at ±1, so the
        // loss is flat in h.
        let g = head.backward(&[1.0, -1.0], 2).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-6), "{g:?}");
    }
}

#[test]
fn missing_tensor_is_named() {
    let mut b = tiny_bundle("gelu");
    b.tensors.shift_remove("layernorm.gamma");
    let err = MlmHeadParams::from_bundle(&b).unwrap_err().to_string();
    assert!(err.contains("layernorm.gamma"), "{err}");
}

#[test]
fn head_round_trips_through_a_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let head = random_head(HeadShape::new(40, 6), 9);
    head.save(dir.path().join("h")).unwrap();
    let back = MlmHeadParams::load(dir.path().join("h")).unwrap();
    assert_eq!(back, head);
    assert_eq!(back.checksum(), head.checksum());
}

#[test]
fn batched_projection_equals_row_by_row() {
    let head = random_head(HeadShape::new(50, 8), 2);
    let mut r = rng(3);
    let rows: Vec<Vec<f32>> = (0..64)
        .map(|_| gaussian_vector(&mut r, 8, 1.0).into_iter().map(|x| x as f32).collect())
        .collect();
    let ids = (0..64).map(|i| format!("e{i}")).collect();
    let store = EmbeddingStore::from_rows(ids, &rows, Similarity::Dot).unwrap();
    let batched = project_store(&head, &store).unwrap();
    for (row, proj) in rows.iter().zip(&batched) {
        assert_eq!(proj.logits(), head.forward_f32(row).unwrap().logits());
    }
}

fn head_and_input() -> impl Strategy<Value = (MlmHeadParams, Vec<f64>, usize)> {
    (2usize..=8, 2usize..=32, any::<bool>(), any::<u64>()).prop_map(|(d, v, gelu, seed)| {
        let act = if gelu { Activation::Gelu } else { Activation::Identity };
        let head = gaussian_head(v, d, act, seed);
        let mut r = rng(seed ^ 1);
        let h = gaussian_vector(&mut r, d, 1.5);
        let target = (seed % v as u64) as usize;
        (head, h, target)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_a_distribution((head, h, _) in head_and_input()) {
        let p = head.forward(&h).unwrap();
        let sum: f64 = p.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-6);
        prop_assert!(p.probs().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn ranks_agree_with_top_k((head, h, _) in head_and_input()) {
        let p = head.forward(&h).unwrap();
        let n = p.vocab_size();
        let top = p.top_k(n).unwrap();
        for (i, (t, prob)) in top.iter().enumerate() {
            prop_assert_eq!(p.rank_of(*t).unwrap(), i + 1);
            prop_assert_eq!(*prob, p.probs()[*t]);
        }
        let by_logit: Vec<usize> = top.iter().map(|(t, _)| *t).collect();
        prop_assert_eq!(&by_logit, &p.ranked_ids());
        for w in top.windows(2) {
            prop_assert!(w[0].1 >= w[1].1);
        }
    }

    #[test]
    fn bias_shift_leaves_probabilities_unchanged((head, h, _) in head_and_input(), c in -50.0f32..50.0) {
        let a = head.forward(&h).unwrap();
        let b = head.with_bias_shift(c).forward(&h).unwrap();
        for (x, y) in a.probs().iter().zip(b.probs()) {
            prop_assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences((head, h, target) in head_and_input()) {
        let analytic = head.backward(&h, target).unwrap();
        let numeric = numeric_grad(&head, &h, target);
        let err = relative_error(&analytic, &numeric, 1e-5);
        prop_assert!(err <= 1e-4, "analytic {:?} numeric {:?} rel {}", analytic, numeric, err);
    }

    #[test]
    fn projection_from_logits_ranks_ties_by_id(logits in prop::collection::vec(-3i8..=3, 2..40)) {
        let logits: Vec<f64> = logits.into_iter().map(f64::from).collect();
        let p = VocabProjection::from_logits("x", logits.clone()).unwrap();
        let ranked = p.ranked_ids();
        for w in ranked.windows(2) {
            let (a, b) = (w[0], w[1]);
            prop_assert!(logits[a] > logits[b] || (logits[a] == logits[b] && a < b));
        }
    }
}
