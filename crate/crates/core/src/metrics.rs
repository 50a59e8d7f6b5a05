//! Cluster assignment and the two agreement scores.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::linalg::kmeans;
use crate::math::ln;
use crate::model::EmbeddingPair;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusterResult {
    pub assignment: Vec<usize>,
    pub nmi: f64,
    pub pairwise_f1: f64,
}

impl ClusterResult {
    pub fn score(assignment: Vec<usize>, truth: &[usize]) -> Result<Self> {
        Ok(Self {
            nmi: nmi(&assignment, truth)?,
            pairwise_f1: pairwise_f1(&assignment, truth)?,
            assignment,
        })
    }
}

/// KMeans on the row-wise concatenation `[e_v ‖ r_v]`.
pub fn assign_clusters(emb: &EmbeddingPair, k: usize, restarts: usize, seed: u64) -> Result<Vec<usize>> {
    kmeans(&emb.concatenated(), k, restarts, seed)
}

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    Ok(())
}

/// Sparse contingency table plus the two marginals.
type Counts<K> = BTreeMap<K, usize>;

fn contingency(pred: &[usize], truth: &[usize]) -> (Counts<(usize, usize)>, Counts<usize>, Counts<usize>) {
    let mut joint = BTreeMap::new();
    let mut rows = BTreeMap::new();
    let mut cols = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *joint.entry((p, t)).or_insert(0) += 1;
        *rows.entry(p).or_insert(0) += 1;
        *cols.entry(t).or_insert(0) += 1;
    }
    (joint, rows, cols)
}

fn entropy(counts: &BTreeMap<usize, usize>, n: f64) -> f64 {
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * ln(p)
        })
        .sum()
}

/// Normalized mutual information with natural logs and the arithmetic mean
/// of the two entropies as normalizer.
///
/// Two single-cluster partitions score 1; otherwise a zero entropy on either
/// side scores 0.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = pred.len() as f64;
    let (joint, rows, cols) = contingency(pred, truth);
    let hp = entropy(&rows, n);
    let ht = entropy(&cols, n);
    if rows.len() == 1 && cols.len() == 1 {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (&(p, t), &c) in &joint {
        let c = c as f64;
        mi += c / n * ln(c * n / (rows[&p] as f64 * cols[&t] as f64));
    }
    Ok((mi / (0.5 * (hp + ht))).clamp(0.0, 1.0))
}

fn pairs(c: usize) -> u128 {
    let c = c as u128;
    c * c.saturating_sub(1) / 2
}

/// F1 over unordered node pairs: a pair is positive when both nodes share a
/// cluster, and correct when they also share a class.
pub fn pairwise_f1(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    if pred.len() < 2 {
        return Err(Error::InvalidArgument("pairwise F1 needs at least two nodes".into()));
    }
    let (joint, rows, cols) = contingency(pred, truth);
    let tp: u128 = joint.values().map(|&c| pairs(c)).sum();
    let pred_pos: u128 = rows.values().map(|&c| pairs(c)).sum();
    let true_pos: u128 = cols.values().map(|&c| pairs(c)).sum();
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / pred_pos as f64;
    let recall = tp as f64 / true_pos as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}
