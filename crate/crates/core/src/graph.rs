//! Attributed graphs, edge homophily and random-walk positional encodings.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Matrix;
use crate::{Error, Result};

/// Node features plus a directed, unweighted edge set.
///
/// Edges are stored sorted by `(src, dst)` without duplicates, which doubles
/// as a CSR layout: the out-neighbours of `u` are a contiguous, sorted slice.
/// Undirected graphs store both orientations of every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    num_nodes: usize,
    directed: bool,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    features: Matrix,
    labels: Option<Vec<usize>>,
    num_classes: Option<usize>,
}

impl AttributedGraph {
    /// One node per feature row. Undirected inputs are symmetrized and
    /// duplicate edges collapse; self-loops are kept.
    pub fn new(features: Matrix, edges: Vec<(usize, usize)>, directed: bool) -> Result<Self> {
        if !features.is_finite() {
            return Err(Error::NonFinite { op: "features" });
        }
        let num_nodes = features.rows();
        for &(u, v) in &edges {
            for index in [u, v] {
                if index >= num_nodes {
                    return Err(Error::NodeOutOfRange { index, num_nodes });
                }
            }
        }
        let mut edges = edges;
        if !directed {
            let reversed: Vec<_> = edges.iter().map(|&(u, v)| (v, u)).collect();
            edges.extend(reversed);
        }
        edges.sort_unstable();
        edges.dedup();
        let offsets = csr_offsets(num_nodes, &edges);
        Ok(Self {
            num_nodes,
            directed,
            edges,
            offsets,
            features,
            labels: None,
            num_classes: None,
        })
    }

    /// Attaches class labels; `num_classes` defaults to `max(label) + 1`.
    pub fn with_labels(mut self, labels: Vec<usize>, num_classes: Option<usize>) -> Result<Self> {
        if labels.len() != self.num_nodes {
            return Err(Error::LabelCountMismatch {
                labels: labels.len(),
                num_nodes: self.num_nodes,
            });
        }
        let num_classes =
            num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |&m| m + 1));
        if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                node,
                label,
                num_classes,
            });
        }
        self.labels = Some(labels);
        self.num_classes = Some(num_classes);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    /// Sorted out-neighbours of `u`.
    pub fn out_neighbors(&self, u: usize) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.edges[self.offsets[u]..self.offsets[u + 1]]
            .iter()
            .map(|&(_, v)| v)
    }

    pub fn out_degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges[self.offsets[u]..self.offsets[u + 1]]
            .binary_search(&(u, v))
            .is_ok()
    }

    /// The same graph with both orientations of every edge, marked undirected.
    pub fn symmetrized(&self) -> Self {
        let mut edges = self.edges.clone();
        edges.extend(self.edges.iter().map(|&(u, v)| (v, u)));
        edges.sort_unstable();
        edges.dedup();
        Self {
            offsets: csr_offsets(self.num_nodes, &edges),
            edges,
            directed: false,
            ..self.clone()
        }
    }

    /// Relabels node `i` as `perm[i]`, permuting features and labels with it.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_nodes {
            return Err(Error::LengthMismatch {
                left: perm.len(),
                right: self.num_nodes,
            });
        }
        let mut inverse = vec![usize::MAX; self.num_nodes];
        for (i, &p) in perm.iter().enumerate() {
            if p >= self.num_nodes || inverse[p] != usize::MAX {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
            inverse[p] = i;
        }
        let features = self.features.select_rows(&inverse);
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        // edges already contain both orientations, so keep them as directed input
        let mut g = Self::new(features, edges, true)?;
        g.directed = self.directed;
        if let Some(labels) = &self.labels {
            let relabeled = inverse.iter().map(|&i| labels[i]).collect();
            g = g.with_labels(relabeled, self.num_classes)?;
        }
        Ok(g)
    }

    /// Fraction of edges whose endpoints share a label.
    pub fn edge_homophily(&self) -> Result<f64> {
        edge_homophily(self)
    }

    pub fn random_walk_pe(&self, k_pe: usize) -> Result<PositionalEncoding> {
        random_walk_pe(self, k_pe)
    }
}

fn csr_offsets(num_nodes: usize, sorted_edges: &[(usize, usize)]) -> Vec<usize> {
    let mut offsets = vec![0usize; num_nodes + 1];
    for &(u, _) in sorted_edges {
        offsets[u + 1] += 1;
    }
    for i in 0..num_nodes {
        offsets[i + 1] += offsets[i];
    }
    offsets
}

/// `|{(u,v) ∈ E : y_u = y_v}| / |E|`.
pub fn edge_homophily(g: &AttributedGraph) -> Result<f64> {
    let labels = g.labels().ok_or(Error::MissingLabels)?;
    if g.edges.is_empty() {
        return Err(Error::EmptyEdgeSet);
    }
    let same = g
        .edges
        .iter()
        .filter(|&&(u, v)| labels[u] == labels[v])
        .count();
    Ok(same as f64 / g.edges.len() as f64)
}

/// Per-node return probabilities of the random walk, steps `1..=k_pe`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalEncoding {
    values: Matrix,
}

impl PositionalEncoding {
    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn k_pe(&self) -> usize {
        self.values.cols()
    }

    pub fn into_matrix(self) -> Matrix {
        self.values
    }
}

/// Row `v` holds `(T)_vv, (T²)_vv, …, (T^k)_vv` for `T = D_out⁻¹ A`.
///
/// Nodes without out-edges have an all-zero row in `T`. The diagonal is
/// obtained by propagating the indicator of each node for `k_pe` steps, so
/// memory stays `O(n)`; time is `O(n · k_pe · |E|)` in the worst case.
pub fn random_walk_pe(g: &AttributedGraph, k_pe: usize) -> Result<PositionalEncoding> {
    if k_pe == 0 {
        return Err(Error::InvalidArgument("k_pe must be at least 1".into()));
    }
    let n = g.num_nodes;
    let inv_deg: Vec<f64> = (0..n)
        .map(|u| match g.out_degree(u) {
            0 => 0.0,
            d => 1.0 / d as f64,
        })
        .collect();
    let mut values = Matrix::zeros(n, k_pe);
    let mut cur = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut cur_support: Vec<usize> = Vec::new();
    let mut next_support: Vec<usize> = Vec::new();
    let mut in_next = vec![false; n];
    for v in 0..n {
        for &i in &cur_support {
            cur[i] = 0.0;
        }
        cur_support.clear();
        cur[v] = 1.0;
        cur_support.push(v);
        for step in 0..k_pe {
            for &u in &cur_support {
                let mass = cur[u] * inv_deg[u];
                if mass == 0.0 {
                    continue;
                }
                for w in g.out_neighbors(u) {
                    if !in_next[w] {
                        in_next[w] = true;
                        next_support.push(w);
                    }
                    next[w] += mass;
                }
            }
            for &i in &cur_support {
                cur[i] = 0.0;
            }
            core::mem::swap(&mut cur, &mut next);
            core::mem::swap(&mut cur_support, &mut next_support);
            next_support.clear();
            for &i in &cur_support {
                in_next[i] = false;
            }
            values.set(v, step, cur[v]);
            if cur_support.is_empty() {
                break;
            }
        }
    }
    Ok(PositionalEncoding { values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(n: usize) -> Matrix {
        Matrix::from_fn(n, 3, |i, j| (i + j) as f64)
    }

    #[test]
    fn minimal_directed_and_undirected() {
        let g = AttributedGraph::new(feats(2), vec![(0, 1)], true).unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.edges(), &[(0, 1)]);
        let u = AttributedGraph::new(feats(2), vec![(0, 1)], false).unwrap();
        assert_eq!(u.edges(), &[(0, 1), (1, 0)]);
    }

    #[test]
    fn out_of_range_edge() {
        let err = AttributedGraph::new(feats(3), vec![(0, 5)], true).unwrap_err();
        assert_eq!(err, Error::NodeOutOfRange { index: 5, num_nodes: 3 });
    }

    #[test]
    fn duplicates_collapse_and_self_loops_stay() {
        let g = AttributedGraph::new(feats(3), vec![(0, 1), (0, 1), (2, 2)], true).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (2, 2)]);
        assert!(g.has_edge(2, 2));
        assert!(!g.has_edge(1, 0));
    }

    #[test]
    fn non_finite_features_rejected() {
        let mut x = feats(2);
        x.set(1, 1, f64::INFINITY);
        assert!(AttributedGraph::new(x, vec![], true).is_err());
    }

    #[test]
    fn label_validation() {
        let g = AttributedGraph::new(feats(2), vec![(0, 1)], true).unwrap();
        assert!(matches!(
            g.clone().with_labels(vec![0], None),
            Err(Error::LabelCountMismatch { .. })
        ));
        assert!(matches!(
            g.clone().with_labels(vec![0, 2], Some(2)),
            Err(Error::LabelOutOfRange { node: 1, .. })
        ));
        assert_eq!(g.with_labels(vec![0, 2], None).unwrap().num_classes(), Some(3));
    }

    #[test]
    fn homophily_examples() {
        let g = AttributedGraph::new(feats(2), vec![(0, 1)], true).unwrap();
        assert_eq!(g.edge_homophily(), Err(Error::MissingLabels));
        let same = g.clone().with_labels(vec![1, 1], None).unwrap();
        assert_eq!(same.edge_homophily().unwrap(), 1.0);
        let diff = g.with_labels(vec![0, 1], None).unwrap();
        assert_eq!(diff.edge_homophily().unwrap(), 0.0);
        // 4-cycle 0-1-2-3-0 with labels 0,1,0,1: every edge joins different labels
        let cycle = AttributedGraph::new(feats(4), vec![(0, 1), (1, 2), (2, 3), (3, 0)], false)
            .unwrap()
            .with_labels(vec![0, 1, 0, 1], None)
            .unwrap();
        assert_eq!(cycle.edge_homophily().unwrap(), 0.0);
    }

    #[test]
    fn pe_two_cycle() {
        let g = AttributedGraph::new(feats(2), vec![(0, 1), (1, 0)], true).unwrap();
        let pe = g.random_walk_pe(2).unwrap();
        assert_eq!(pe.values().row(0), &[0.0, 1.0]);
        assert_eq!(pe.values().row(1), &[0.0, 1.0]);
    }

    #[test]
    fn pe_isolated_node() {
        let g = AttributedGraph::new(feats(1), vec![], true).unwrap();
        let pe = g.random_walk_pe(3).unwrap();
        assert_eq!(pe.values().row(0), &[0.0, 0.0, 0.0]);
        assert!(g.random_walk_pe(0).is_err());
    }

    #[test]
    fn pe_triangle() {
        let g = AttributedGraph::new(feats(3), vec![(0, 1), (1, 2), (2, 0)], false).unwrap();
        let pe = g.random_walk_pe(2).unwrap();
        for v in 0..3 {
            assert_eq!(pe.values().get(v, 0), 0.0);
            assert!((pe.values().get(v, 1) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn pe_self_loop_contributes_to_diagonal() {
        // 0 → {0, 1}, 1 → 0: T = [[1/2, 1/2], [1, 0]], T² = [[3/4, 1/4], [1/2, 1/2]]
        let g = AttributedGraph::new(feats(2), vec![(0, 0), (0, 1), (1, 0)], true).unwrap();
        let pe = g.random_walk_pe(2).unwrap();
        assert_eq!(pe.values().row(0), &[0.5, 0.75]);
        assert_eq!(pe.values().row(1), &[0.0, 0.5]);
    }
}
