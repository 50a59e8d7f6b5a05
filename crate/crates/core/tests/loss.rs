use hencler_core::loss::{
    compute_degrees, edge_rec_loss, node_rec_loss, sample_edges, total_loss, wksvd_loss, EdgeSample, LossTerms,
    DEGREE_EPS,
};
use hencler_core::model::{decode_edge, forward, project};
use hencler_core::synthetic::{heterophilous_graph, HeterophilousConfig};
use hencler_core::{AttributedGraph, EmbeddingPair, HenclerParams, Matrix, ModelDims, SimilarityFactor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

#[test]
fn degrees_match_materialized_rows_and_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..50 {
        let n = rng.random_range(1..=50);
        let d = rng.random_range(1..=6);
        let sf = SimilarityFactor::new(
            random_matrix(n, d, -0.2, 1.0, &mut rng),
            random_matrix(n, d, -0.2, 1.0, &mut rng),
        )
        .unwrap();
        let s = sf.similarity();
        let deg = compute_degrees(&sf);
        for (v, (r, c)) in s.row_sums().iter().zip(s.col_sums()).enumerate() {
            assert!((deg.d1[v] - r.max(DEGREE_EPS)).abs() < 1e-10);
            assert!((deg.d2[v] - c.max(DEGREE_EPS)).abs() < 1e-10);
        }
    }
}

/// The four terms written out over an explicit `S`.
fn wksvd_oracle(phi: &Matrix, psi: &Matrix, u: &Matrix, v: &Matrix, sigma: &[f64]) -> f64 {
    let n = phi.rows();
    let s = phi.matmul_t(psi).unwrap();
    let mut loss = 0.0;
    for i in 0..n {
        let d1 = (0..n).map(|j| s.get(i, j)).sum::<f64>().max(DEGREE_EPS);
        let d2 = (0..n).map(|j| s.get(j, i)).sum::<f64>().max(DEGREE_EPS);
        for (k, &sk) in sigma.iter().enumerate() {
            let e: f64 = (0..phi.cols()).map(|a| u.get(a, k) * phi.get(i, a)).sum();
            let r: f64 = (0..psi.cols()).map(|a| v.get(a, k) * psi.get(i, a)).sum();
            loss -= e * e / (sk * d1);
            loss -= r * r / (sk * d2);
        }
        loss += s.get(i, i) / (d1 * d2).sqrt();
    }
    for a in 0..u.rows() {
        for k in 0..u.cols() {
            loss += u.get(a, k) * v.get(a, k);
        }
    }
    loss
}

fn random_instance(n: usize, d: usize, s: usize, rng: &mut ChaCha8Rng) -> (SimilarityFactor, Matrix, Matrix, Vec<f64>) {
    let sf = SimilarityFactor::new(random_matrix(n, d, 0.0, 1.0, rng), random_matrix(n, d, 0.0, 1.0, rng)).unwrap();
    let u = random_matrix(d, s, -1.0, 1.0, rng);
    let v = random_matrix(d, s, -1.0, 1.0, rng);
    let raw: Vec<f64> = (0..s).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    (sf, u, v, raw.iter().map(|x| x / total).collect())
}

fn embed(sf: &SimilarityFactor, u: &Matrix, v: &Matrix) -> EmbeddingPair {
    EmbeddingPair::new(sf.phi.matmul(u).unwrap(), sf.psi.matmul(v).unwrap()).unwrap()
}

#[test]
fn wksvd_matches_materialized_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..20 {
        let (sf, u, v, sigma) = random_instance(8, 5, 3, &mut rng);
        let got = wksvd_loss(&sf, &embed(&sf, &u, &v), &sigma, &compute_degrees(&sf), &u, &v).unwrap();
        let want = wksvd_oracle(&sf.phi, &sf.psi, &u, &v, &sigma);
        assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn wksvd_ignores_joint_column_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..20 {
        let (sf, u, v, sigma) = random_instance(10, 4, 4, &mut rng);
        let deg = compute_degrees(&sf);
        let base = wksvd_loss(&sf, &embed(&sf, &u, &v), &sigma, &deg, &u, &v).unwrap();
        let mut perm: Vec<usize> = (0..4).collect();
        perm.rotate_left(rng.random_range(1..4));
        perm.swap(0, rng.random_range(0..4));
        let (pu, pv) = (u.select_cols(&perm), v.select_cols(&perm));
        let ps: Vec<f64> = perm.iter().map(|&i| sigma[i]).collect();
        let moved = wksvd_loss(&sf, &embed(&sf, &pu, &pv), &ps, &deg, &pu, &pv).unwrap();
        assert!((base - moved).abs() <= 1e-10 * base.abs().max(1.0));
    }
}

#[test]
fn node_rec_matches_elementwise_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let x = random_matrix(7, 4, -1.0, 1.0, &mut rng);
    let y = random_matrix(7, 4, -1.0, 1.0, &mut rng);
    let mut want = 0.0;
    for i in 0..7 {
        for j in 0..4 {
            want += (y.get(i, j) - x.get(i, j)).powi(2);
        }
    }
    assert!((node_rec_loss(&y, &x).unwrap() - want / 7.0).abs() < 1e-12);
}

fn small_params(d_x: usize, seed: u64) -> HenclerParams {
    HenclerParams::init(ModelDims::with_widths(d_x, 2, 6, 4, 4), false, seed).unwrap()
}

#[test]
fn edge_rec_matches_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let params = small_params(3, 1);
    let emb = EmbeddingPair::new(random_matrix(9, 4, -1.0, 1.0, &mut rng), random_matrix(9, 4, -1.0, 1.0, &mut rng)).unwrap();
    let sample = EdgeSample {
        positives: vec![(0, 1), (2, 3), (4, 8), (8, 4)],
        negatives: vec![(1, 0), (5, 6), (7, 2), (3, 3)],
    };
    let mut want = 0.0;
    for &(u, v) in &sample.positives {
        want -= decode_edge(&emb, &params, u, v).unwrap().ln();
    }
    for &(u, v) in &sample.negatives {
        want -= (1.0 - decode_edge(&emb, &params, u, v).unwrap()).ln();
    }
    assert!((edge_rec_loss(&emb, &params, &sample).unwrap() - want / 8.0).abs() < 1e-10);
}

#[test]
fn edge_rec_drops_as_decoder_moves_toward_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let mut params = small_params(3, 2);
    params.set("proj.u", Matrix::identity(4)).unwrap();
    params.set("proj.v", Matrix::identity(4)).unwrap();
    let e = random_matrix(6, 4, -1.0, 1.0, &mut rng);
    let sample = EdgeSample {
        positives: vec![(0, 0), (1, 1), (2, 2)],
        negatives: vec![(3, 3), (4, 4), (5, 5)],
    };
    let mut last = f64::INFINITY;
    for step in 0..5 {
        let t = step as f64 * 0.5;
        // positives pull r_v toward e_u, negatives push it to −e_u
        let r = Matrix::from_fn(6, 4, |i, j| if i < 3 { t * e.get(i, j) } else { -t * e.get(i, j) });
        let loss = edge_rec_loss(&EmbeddingPair::new(e.clone(), r).unwrap(), &params, &sample).unwrap();
        assert!(loss < last);
        last = loss;
    }
}

fn path_graph(n: usize) -> AttributedGraph {
    let x = Matrix::from_fn(n, 3, |i, j| ((i + 1) * (j + 2)) as f64 % 5.0);
    AttributedGraph::new(x, (0..n - 1).map(|i| (i, i + 1)).collect(), false).unwrap()
}

#[test]
fn sampling_is_seeded_and_valid() {
    let g = heterophilous_graph(&HeterophilousConfig::new(100, 3, 4)).unwrap();
    let a = sample_edges(&g, 1).unwrap();
    assert_eq!(a, sample_edges(&g, 1).unwrap());
    assert_ne!(a, sample_edges(&g, 2).unwrap());
    assert_eq!(a.positives.len(), 200);
    assert_eq!(a.negatives.len(), 200);
    assert!(a.positives.iter().all(|&(u, v)| g.has_edge(u, v)));
    assert!(a.negatives.iter().all(|&(u, v)| u != v && !g.has_edge(u, v)));

    let p = path_graph(3);
    let s = sample_edges(&p, 0).unwrap();
    assert!(s.negatives.iter().all(|&(u, v)| !p.has_edge(u, v)));
}

#[test]
fn total_is_sum_of_parts() {
    let g = path_graph(8);
    let pe = g.random_walk_pe(2).unwrap();
    let input = hencler_core::model::model_input(&g, &pe).unwrap();
    let mut params = small_params(3, 3);
    for name in ["phi.norm.bias", "psi.norm.bias"] {
        params.set(name, Matrix::filled(1, 4, 0.5)).unwrap();
    }
    let sample = sample_edges(&g, 5).unwrap();
    let all = total_loss(&input, g.features(), &params, &sample, LossTerms::All).unwrap();
    let (sf, emb, sigma) = forward(&input, &params).unwrap();
    assert_eq!(project(&sf, &params).unwrap(), emb);
    let u = params.get("proj.u").unwrap();
    let v = params.get("proj.v").unwrap();
    let parts = [
        wksvd_loss(&sf, &emb, &sigma, &compute_degrees(&sf), u, v).unwrap(),
        node_rec_loss(&hencler_core::model::decode_nodes(&emb, &params).unwrap(), g.features()).unwrap(),
        edge_rec_loss(&emb, &params, &sample).unwrap(),
    ];
    assert!((all.total() - parts.iter().sum::<f64>()).abs() < 1e-10 * all.total().abs().max(1.0));
    let w = total_loss(&input, g.features(), &params, &sample, LossTerms::Wksvd).unwrap();
    assert_eq!((w.node_rec, w.edge_rec), (0.0, 0.0));
    let r = total_loss(&input, g.features(), &params, &sample, LossTerms::Reconstr).unwrap();
    assert_eq!(r.wksvd, 0.0);
    assert!((r.total() - parts[1] - parts[2]).abs() < 1e-12);
}
