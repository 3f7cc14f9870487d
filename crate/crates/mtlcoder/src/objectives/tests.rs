use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::LabelSet;
use crate::gradcheck::{finite_diff_grads, max_rel_error};
use crate::tensor::{Graph, Tensor};

/// Direct loop evaluation of the clipped multi-label cross entropy.
fn bce_oracle(y: &[f64], p: &[f64]) -> f64 {
    y.iter()
        .zip(p)
        .map(|(&yi, &pi)| {
            let pi = pi.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
            -(yi * pi.ln() + (1.0 - yi) * (1.0 - pi).ln())
        })
        .sum()
}

#[test]
fn bce_at_half_is_ln2_per_label() {
    let mut g = Graph::new();
    let p = g.input(Tensor::vector(vec![0.5, 0.5]));
    let loss = multilabel_bce(&mut g, &[1.0, 0.0], p).unwrap();
    assert!((g.value(loss).data[0] - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn bce_of_perfect_prediction_is_near_zero() {
    let mut g = Graph::new();
    let p = g.input(Tensor::vector(vec![1.0, 0.0]));
    let loss = multilabel_bce(&mut g, &[1.0, 0.0], p).unwrap();
    // Clipping keeps the loss finite and tiny instead of exactly zero.
    let v = g.value(loss).data[0];
    assert!(v > 0.0 && v < 1e-6, "loss {v}");
}

#[test]
fn bce_matches_direct_loop_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let l = rng.gen_range(1..=5);
        let y: Vec<f64> = (0..l).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
        let p: Vec<f64> = (0..l).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut g = Graph::new();
        let pv = g.input(Tensor::vector(p.clone()));
        let loss = multilabel_bce(&mut g, &y, pv).unwrap();
        assert!((g.value(loss).data[0] - bce_oracle(&y, &p)).abs() < 1e-12);
    }
}

#[test]
fn bce_rejects_length_mismatch() {
    let mut g = Graph::new();
    let p = g.input(Tensor::vector(vec![0.5]));
    assert!(multilabel_bce(&mut g, &[1.0, 0.0], p).is_err());
}

#[test]
fn bce_gradient_matches_finite_differences() {
    let mut params = BTreeMap::new();
    params.insert(
        "z".to_string(),
        Tensor::vector(vec![0.3, -1.2, 0.8]).with_grad(),
    );
    let y = [1.0, 0.0, 1.0];
    let forward = |p: &BTreeMap<String, Tensor>| -> (Graph, crate::tensor::Var) {
        let mut g = Graph::new();
        let z = g.param("z", &p["z"]).unwrap();
        let post = g.sigmoid(z).unwrap();
        let loss = multilabel_bce(&mut g, &y, post).unwrap();
        (g, loss)
    };
    let (g, loss) = forward(&params);
    let analytic = g.backward(loss).unwrap();
    let numeric = finite_diff_grads(&params, 1e-6, |p| {
        let (g, loss) = forward(p);
        g.value(loss).data[0]
    });
    assert!(max_rel_error(&analytic, &numeric) < 1e-6);
}

fn sets(rows: &[&[u8]]) -> Vec<LabelSet> {
    rows.iter()
        .map(|r| LabelSet { bits: r.to_vec() })
        .collect()
}

#[test]
fn sample_weight_counts_match_hand_tally() {
    // Label 0: 1 positive of 4 -> ratio 3. Label 1: 2 of 4 -> ratio 1.
    let labels = sets(&[&[1, 0], &[0, 1], &[0, 1], &[0, 0]]);
    let table = compute_sample_weights(&labels).unwrap();
    assert_eq!(table.positives, vec![1, 2]);
    assert_eq!(table.negatives, vec![3, 2]);
    assert_eq!(table.ratio, vec![3.0, 1.0]);

    // Weight is the mean over labels of (ratio if positive else 1).
    let w = table.weight(&LabelSet { bits: vec![1, 0] });
    assert_eq!(w, (3.0 + 1.0) / 2.0);
    let w = table.weight(&LabelSet { bits: vec![0, 0] });
    assert_eq!(w, 1.0);
}

#[test]
fn balanced_labels_give_unit_weights() {
    let labels = sets(&[&[1, 1], &[0, 0], &[1, 0], &[0, 1]]);
    let table = compute_sample_weights(&labels).unwrap();
    assert_eq!(table.ratio, vec![1.0, 1.0]);
    for bits in [[0, 0], [0, 1], [1, 0], [1, 1]] {
        assert_eq!(table.weight(&LabelSet { bits: bits.to_vec() }), 1.0);
    }
}

#[test]
fn all_negative_label_is_capped_at_sample_count() {
    let labels = sets(&[&[0], &[0], &[0]]);
    let table = compute_sample_weights(&labels).unwrap();
    assert_eq!(table.ratio, vec![3.0]);
}

#[test]
fn empty_training_split_is_rejected() {
    assert!(compute_sample_weights(&[]).is_err());
}

#[test]
fn weighted_loss_is_the_weighted_sum() {
    let mut g = Graph::new();
    let a = g.input(Tensor::scalar(2.0));
    let b = g.input(Tensor::scalar(5.0));
    let total = weighted_loss(&mut g, &[(a, 3.0), (b, 0.5)]).unwrap();
    assert_eq!(g.value(total).data[0], 8.5);
    assert!(weighted_loss(&mut g, &[]).is_err());
}

#[test]
fn discriminator_at_zero_weights_is_half() {
    let mut g = Graph::new();
    let shared = g.input(Tensor::vector(vec![0.4, -0.2, 0.9]));
    let u = g.input(Tensor::matrix(1, 3, vec![0.0; 3]).unwrap());
    let b = g.input(Tensor::vector(vec![0.0]));
    let d = task_discriminator(&mut g, shared, u, b).unwrap();
    assert_eq!(g.value(d).data, vec![0.5]);
    let loss = task_loss(&mut g, 1.0, d).unwrap();
    assert!((g.value(loss).data[0] - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn diff_loss_of_identity_pair_is_two() {
    let mut g = Graph::new();
    let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let a = g.input(eye.clone());
    let b = g.input(eye);
    let d = diff_loss(&mut g, a, b).unwrap();
    assert_eq!(g.value(d).data, vec![2.0]);
}

#[test]
fn diff_loss_of_orthogonal_features_is_zero() {
    let mut g = Graph::new();
    // Columns of the two feature matrices are mutually orthogonal, so
    // every entry of S^T T vanishes.
    let shared = g.input(Tensor::matrix(2, 2, vec![1.0, 0.0, 2.0, 0.0]).unwrap());
    let task = g.input(Tensor::matrix(2, 2, vec![2.0, 0.0, -1.0, 0.0]).unwrap());
    let d = diff_loss(&mut g, shared, task).unwrap();
    assert_eq!(g.value(d).data, vec![0.0]);
}

#[test]
fn diff_loss_matches_double_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (b, k) = (4, 3);
    let s: Vec<f64> = (0..b * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let t: Vec<f64> = (0..b * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    // (S^T T)_{ij} = sum_r S_{ri} T_{rj}; the loss is its squared
    // Frobenius norm, computed here entry by entry.
    let mut expected = 0.0;
    for i in 0..k {
        for j in 0..k {
            let mut e = 0.0;
            for r in 0..b {
                e += s[r * k + i] * t[r * k + j];
            }
            expected += e * e;
        }
    }
    let mut g = Graph::new();
    let sv = g.input(Tensor::matrix(b, k, s).unwrap());
    let tv = g.input(Tensor::matrix(b, k, t).unwrap());
    let d = diff_loss(&mut g, sv, tv).unwrap();
    assert!((g.value(d).data[0] - expected).abs() < 1e-12);
}

#[test]
fn diff_loss_rejects_batch_row_mismatch() {
    let mut g = Graph::new();
    let a = g.input(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
    let b = g.input(Tensor::matrix(3, 3, vec![0.0; 9]).unwrap());
    assert!(diff_loss(&mut g, a, b).is_err());
}

#[test]
fn total_loss_combines_terms_with_coefficients() {
    let mut g = Graph::new();
    let ea = g.input(Tensor::scalar(1.0));
    let eb = g.input(Tensor::scalar(2.0));
    let et = g.input(Tensor::scalar(10.0));
    let ed = g.input(Tensor::scalar(100.0));
    let total = total_multitask_loss(&mut g, &[ea, eb], et, ed, 0.05, 0.01).unwrap();
    // 1 + 2 + 0.05*10 + 0.01*100 = 4.5
    assert_eq!(g.value(total).data[0], 4.5);
}

proptest! {
    #[test]
    fn bce_is_finite_and_nonnegative(
        bits in prop::collection::vec(0u8..2, 1..6),
        probs in prop::collection::vec(0.0f64..=1.0, 1..6),
    ) {
        let l = bits.len().min(probs.len());
        let y: Vec<f64> = bits[..l].iter().map(|&b| f64::from(b)).collect();
        let p = probs[..l].to_vec();
        let mut g = Graph::new();
        let pv = g.input(Tensor::vector(p));
        let loss = multilabel_bce(&mut g, &y, pv).unwrap();
        let v = g.value(loss).data[0];
        prop_assert!(v.is_finite());
        prop_assert!(v >= 0.0);
    }

    #[test]
    fn sample_weights_are_at_least_the_all_negative_weight(
        rows in prop::collection::vec(prop::collection::vec(0u8..2, 3), 1..20),
    ) {
        let labels: Vec<LabelSet> = rows.iter().map(|r| LabelSet { bits: r.clone() }).collect();
        let table = compute_sample_weights(&labels).unwrap();
        for set in &labels {
            let w = table.weight(set);
            prop_assert!(w.is_finite());
            // A label with no negatives has ratio 0, so weights can reach 0
            // but never go below it.
            prop_assert!(w >= 0.0);
        }
        // The all-negative sample always has weight exactly 1.
        let zero = LabelSet { bits: vec![0; 3] };
        prop_assert!((table.weight(&zero) - 1.0).abs() < 1e-15);
    }
}
