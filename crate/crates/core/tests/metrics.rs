use std::collections::HashMap;

use hencler_core::metrics::{nmi, pairwise_f1};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts.filter(|&c| c > 0).map(|c| c as f64 / n).map(|p| -p * p.ln()).sum()
}

fn nmi_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut a: HashMap<usize, usize> = HashMap::new();
    let mut b: HashMap<usize, usize> = HashMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *joint.entry((p, t)).or_default() += 1;
        *a.entry(p).or_default() += 1;
        *b.entry(t).or_default() += 1;
    }
    let ha = entropy(a.values().copied(), n);
    let hb = entropy(b.values().copied(), n);
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    if ha == 0.0 || hb == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for (&(p, t), &c) in &joint {
        let pj = c as f64 / n;
        mi += pj * (pj / (a[&p] as f64 / n * b[&t] as f64 / n)).ln();
    }
    mi / ((ha + hb) / 2.0)
}

fn f1_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let (mut tp, mut pp, mut tt) = (0.0, 0.0, 0.0);
    for i in 0..pred.len() {
        for j in i + 1..pred.len() {
            let p = pred[i] == pred[j];
            let t = truth[i] == truth[j];
            pp += f64::from(u8::from(p));
            tt += f64::from(u8::from(t));
            tp += f64::from(u8::from(p && t));
        }
    }
    if tp == 0.0 {
        return 0.0;
    }
    let (precision, recall) = (tp / pp, tp / tt);
    2.0 * precision * recall / (precision + recall)
}

fn labeling(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

#[test]
fn nmi_matches_contingency_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let n = rng.random_range(1..=30);
        let pred = labeling(n, rng.random_range(1..6), &mut rng);
        let truth = labeling(n, rng.random_range(1..6), &mut rng);
        let got = nmi(&pred, &truth).unwrap();
        let want = nmi_oracle(&pred, &truth);
        assert!((got - want).abs() < 1e-10, "{pred:?} {truth:?}: {got} vs {want}");
    }
}

#[test]
fn f1_matches_all_pairs_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..200 {
        let n = rng.random_range(2..=50);
        let pred = labeling(n, rng.random_range(1..8), &mut rng);
        let truth = labeling(n, rng.random_range(1..8), &mut rng);
        let got = pairwise_f1(&pred, &truth).unwrap();
        assert!((got - f1_oracle(&pred, &truth)).abs() < 1e-12);
    }
}

#[test]
fn hand_examples() {
    assert_eq!(pairwise_f1(&[0, 0, 0, 1], &[0, 0, 1, 1]).unwrap(), 0.4);
    assert_eq!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.0);
    assert_eq!(nmi(&[2, 2, 0, 0], &[0, 0, 1, 1]).unwrap(), 1.0);
    assert_eq!(pairwise_f1(&[0, 1, 2, 3], &[0, 0, 1, 1]).unwrap(), 0.0);
}

#[test]
fn independent_labels_have_small_nmi() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let pred = labeling(2000, 2, &mut rng);
    let truth = labeling(2000, 2, &mut rng);
    assert!(nmi(&pred, &truth).unwrap() < 0.05);
}

fn labels_and_perm() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, Vec<usize>, Vec<usize>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(0usize..4, n),
            prop::collection::vec(0usize..4, n),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
            Just((0..4).collect::<Vec<_>>()).prop_shuffle(),
        )
    })
}

proptest! {
    #[test]
    fn metrics_ignore_relabeling_and_node_order((pred, truth, perm, relabel) in labels_and_perm()) {
        let base_nmi = nmi(&pred, &truth).unwrap();
        let base_f1 = pairwise_f1(&pred, &truth).unwrap();
        let renamed: Vec<usize> = pred.iter().map(|&c| relabel[c]).collect();
        prop_assert!((nmi(&renamed, &truth).unwrap() - base_nmi).abs() < 1e-12);
        prop_assert!((pairwise_f1(&renamed, &truth).unwrap() - base_f1).abs() < 1e-12);
        let p: Vec<usize> = perm.iter().map(|&i| pred[i]).collect();
        let t: Vec<usize> = perm.iter().map(|&i| truth[i]).collect();
        prop_assert!((nmi(&p, &t).unwrap() - base_nmi).abs() < 1e-12);
        prop_assert!((pairwise_f1(&p, &t).unwrap() - base_f1).abs() < 1e-12);
    }
}
