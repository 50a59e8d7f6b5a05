//! Seeded generators for planted test problems.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::graph::AttributedGraph;
use crate::linalg::Matrix;
use crate::Result;

/// Directed graph whose edges only join nodes of different classes, with
/// class-conditional Gaussian attributes.
///
/// Node `v` has class `v % num_classes`. The first `num_classes` attribute
/// dimensions carry the class mean `separation · e_c` with unit noise; the
/// remaining `nuisance_dims` are class-independent with standard deviation
/// `nuisance_std`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HeterophilousConfig {
    pub num_nodes: usize,
    pub num_classes: usize,
    /// Out-edges drawn per node (duplicates collapse).
    pub out_degree: usize,
    pub separation: f64,
    pub nuisance_dims: usize,
    pub nuisance_std: f64,
    pub seed: u64,
}

impl HeterophilousConfig {
    pub fn new(num_nodes: usize, num_classes: usize, seed: u64) -> Self {
        Self {
            num_nodes,
            num_classes,
            out_degree: 5,
            separation: 2.0,
            nuisance_dims: 6,
            nuisance_std: 1.5,
            seed,
        }
    }
}

pub fn heterophilous_graph(cfg: &HeterophilousConfig) -> Result<AttributedGraph> {
    let n = cfg.num_nodes;
    let k = cfg.num_classes.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels: Vec<usize> = (0..n).map(|v| v % k).collect();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let d_x = k + cfg.nuisance_dims;
    let mut features = Matrix::zeros(n, d_x);
    for (v, &y) in labels.iter().enumerate() {
        let row = features.row_mut(v);
        for (j, x) in row.iter_mut().enumerate() {
            let z: f64 = noise.sample(&mut rng);
            *x = if j < k {
                z + if j == y { cfg.separation } else { 0.0 }
            } else {
                z * cfg.nuisance_std
            };
        }
    }
    let mut edges = Vec::with_capacity(n * cfg.out_degree);
    if n > 1 {
        for (u, &yu) in labels.iter().enumerate() {
            for _ in 0..cfg.out_degree {
                let mut v = rng.random_range(0..n);
                while labels[v] == yu {
                    v = rng.random_range(0..n);
                }
                edges.push((u, v));
            }
        }
    }
    AttributedGraph::new(features, edges, true)?.with_labels(labels, Some(k))
}

/// Nonnegative `rows×cols` matrix with `k` diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedBlocks {
    pub similarity: Matrix,
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
}

/// In-block entries are uniform in `[0.5, 1]`, off-block entries uniform in
/// `[0, noise]`. Blocks are contiguous and of near-equal size.
pub fn planted_blocks(rows: usize, cols: usize, k: usize, noise: f64, seed: u64) -> PlantedBlocks {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row_labels: Vec<usize> = (0..rows).map(|i| i * k / rows.max(1)).collect();
    let col_labels: Vec<usize> = (0..cols).map(|j| j * k / cols.max(1)).collect();
    let similarity = Matrix::from_fn(rows, cols, |i, j| {
        if row_labels[i] == col_labels[j] {
            rng.random_range(0.5..=1.0)
        } else if noise > 0.0 {
            rng.random_range(0.0..=noise)
        } else {
            0.0
        }
    });
    PlantedBlocks {
        similarity,
        row_labels,
        col_labels,
    }
}
