use hencler_core::{AttributedGraph, Matrix};
use proptest::prelude::*;

fn graph_strategy(directed: bool) -> impl Strategy<Value = (AttributedGraph, Vec<usize>)> {
    (2usize..=20).prop_flat_map(move |n| {
        let edges = prop::collection::vec((0..n, 0..n), 0..60);
        let perm = Just((0..n).collect::<Vec<_>>()).prop_shuffle();
        let labels = prop::collection::vec(0usize..3, n);
        (edges, perm, labels).prop_map(move |(edges, perm, labels)| {
            let x = Matrix::from_fn(n, 2, |i, j| (i * 2 + j) as f64);
            let g = AttributedGraph::new(x, edges, directed)
                .unwrap()
                .with_labels(labels, Some(3))
                .unwrap();
            (g, perm)
        })
    })
}

proptest! {
    #[test]
    fn pe_is_permutation_equivariant((g, perm) in graph_strategy(true), k in 1usize..6) {
        let pe = g.random_walk_pe(k).unwrap();
        let moved = g.permuted(&perm).unwrap().random_walk_pe(k).unwrap();
        for (old, &new) in perm.iter().enumerate() {
            for j in 0..k {
                let a = pe.values().get(old, j);
                let b = moved.values().get(new, j);
                prop_assert!((a - b).abs() < 1e-12, "node {old} step {j}: {a} vs {b}");
                prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
            }
        }
    }

    #[test]
    fn symmetrize_is_idempotent((g, _) in graph_strategy(false)) {
        let once = g.symmetrized();
        prop_assert_eq!(once.symmetrized(), once);
    }

    #[test]
    fn homophily_ignores_edge_order((g, shuffle) in graph_strategy(true)) {
        prop_assume!(g.num_edges() > 0);
        let mut edges = g.edges().to_vec();
        edges.reverse();
        let len = edges.len();
        edges.rotate_left(shuffle[0] % len);
        let reordered = AttributedGraph::new(g.features().clone(), edges, true)
            .unwrap()
            .with_labels(g.labels().unwrap().to_vec(), Some(3))
            .unwrap();
        prop_assert_eq!(g.edge_homophily().unwrap(), reordered.edge_homophily().unwrap());
    }
}
