//! The three training losses and the per-epoch edge sample.
//!
//! Each loss exists twice: as plain arithmetic on matrices, and as a tape
//! builder used for training. Tests hold the two routes against each other.

use alloc::vec::Vec;
use core::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{sigmoid, Bindings, Tape, Var};
use crate::graph::AttributedGraph;
use crate::linalg::Matrix;
use crate::math::{ln, sqrt};
use crate::model::{build_decode_nodes, build_edge_logits, build_forward, EmbeddingPair, ForwardVars, HenclerParams, SimilarityFactor};
use crate::{Error, Result};

/// Lower bound applied to learned degrees.
pub const DEGREE_EPS: f64 = 1e-6;
/// Edge probabilities are clamped into `[PROB_EPS, 1 − PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-7;

/// Row and column sums of `S = ΦΨᵀ`, clamped below at [`DEGREE_EPS`].
#[derive(Debug, Clone, PartialEq)]
pub struct DegreePair {
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl DegreePair {
    /// `w1 = 1/d1`.
    pub fn w1(&self) -> Vec<f64> {
        self.d1.iter().map(|d| 1.0 / d).collect()
    }

    pub fn w2(&self) -> Vec<f64> {
        self.d2.iter().map(|d| 1.0 / d).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSample {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

impl EdgeSample {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Which loss terms enter the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum LossTerms {
    All,
    Wksvd,
    Reconstr,
}

impl LossTerms {
    pub fn wksvd(self) -> bool {
        matches!(self, Self::All | Self::Wksvd)
    }

    pub fn reconstruction(self) -> bool {
        matches!(self, Self::All | Self::Reconstr)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::All => "all",
            Self::Wksvd => "wksvd",
            Self::Reconstr => "reconstr",
        }
    }
}

impl FromStr for LossTerms {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Self::All),
            "wksvd" => Ok(Self::Wksvd),
            "reconstr" => Ok(Self::Reconstr),
            other => Err(Error::InvalidArgument(alloc::format!(
                "unknown loss selection `{other}` (expected all, wksvd or reconstr)"
            ))),
        }
    }
}

/// Value of each loss term; disabled terms are zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown {
    pub wksvd: f64,
    pub node_rec: f64,
    pub edge_rec: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.wksvd + self.node_rec + self.edge_rec
    }
}

pub fn compute_degrees(sf: &SimilarityFactor) -> DegreePair {
    let psi_sum = sf.psi.col_sums();
    let phi_sum = sf.phi.col_sums();
    let dot = |row: &[f64], s: &[f64]| -> f64 { row.iter().zip(s).map(|(a, b)| a * b).sum() };
    let d1 = (0..sf.phi.rows()).map(|v| dot(sf.phi.row(v), &psi_sum).max(DEGREE_EPS)).collect();
    let d2 = (0..sf.psi.rows()).map(|v| dot(sf.psi.row(v), &phi_sum).max(DEGREE_EPS)).collect();
    DegreePair { d1, d2 }
}

/// `−Σ w1_v e_vᵀΣ⁻¹e_v − Σ w2_v r_vᵀΣ⁻¹r_v + Tr(UᵀV) + Σ √(w1_v w2_v) φ_vᵀψ_v`.
pub fn wksvd_loss(
    sf: &SimilarityFactor,
    emb: &EmbeddingPair,
    sigma: &[f64],
    degrees: &DegreePair,
    u: &Matrix,
    v: &Matrix,
) -> Result<f64> {
    let n = sf.num_nodes();
    let s = sigma.len();
    if sf.psi.rows() != n {
        return Err(Error::ShapeMismatch {
            op: "wksvd_loss factors",
            lhs: sf.phi.shape(),
            rhs: sf.psi.shape(),
        });
    }
    if emb.e.shape() != (n, s) || emb.r.shape() != (n, s) {
        return Err(Error::ShapeMismatch {
            op: "wksvd_loss",
            lhs: emb.e.shape(),
            rhs: (n, s),
        });
    }
    if degrees.d1.len() != n || degrees.d2.len() != n {
        return Err(Error::LengthMismatch {
            left: degrees.d1.len(),
            right: n,
        });
    }
    if u.shape() != v.shape() || u.cols() != s {
        return Err(Error::ShapeMismatch {
            op: "wksvd_loss projections",
            lhs: u.shape(),
            rhs: v.shape(),
        });
    }
    let quad = |x: &[f64]| -> f64 { x.iter().zip(sigma).map(|(a, sg)| a * a / sg).sum() };
    let mut total = 0.0;
    for i in 0..n {
        let (d1, d2) = (degrees.d1[i], degrees.d2[i]);
        total -= quad(emb.e.row(i)) / d1;
        total -= quad(emb.r.row(i)) / d2;
        let pp: f64 = sf.phi.row(i).iter().zip(sf.psi.row(i)).map(|(a, b)| a * b).sum();
        total += sqrt(1.0 / d1 * (1.0 / d2)) * pp;
    }
    total += u.as_slice().iter().zip(v.as_slice()).map(|(a, b)| a * b).sum::<f64>();
    if !total.is_finite() {
        return Err(Error::NonFinite { op: "wksvd_loss" });
    }
    Ok(total)
}

/// `(1/n) Σ_v ‖recon_v − x_v‖²`.
pub fn node_rec_loss(recon: &Matrix, features: &Matrix) -> Result<f64> {
    let diff = recon.sub(features)?;
    if recon.rows() == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(diff.as_slice().iter().map(|x| x * x).sum::<f64>() / recon.rows() as f64)
}

/// `2n` positives from the edge set and `2n` non-edges without self-pairs.
pub fn sample_edges(g: &AttributedGraph, seed: u64) -> Result<EdgeSample> {
    sample_edges_with(g, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_edges_with<R: Rng>(g: &AttributedGraph, rng: &mut R) -> Result<EdgeSample> {
    let n = g.num_nodes();
    let edges = g.edges();
    if edges.is_empty() {
        return Err(Error::EmptyEdgeSet);
    }
    let off_diagonal = edges.iter().filter(|(u, v)| u != v).count();
    if off_diagonal >= n * n.saturating_sub(1) {
        return Err(Error::CompleteGraph);
    }
    let want = 2 * n;
    let positives = if edges.len() >= want {
        sample(rng, edges.len(), want).into_iter().map(|i| edges[i]).collect()
    } else {
        (0..want).map(|_| edges[rng.random_range(0..edges.len())]).collect()
    };
    let mut negatives = Vec::with_capacity(want);
    while negatives.len() < want {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v && !g.has_edge(u, v) {
            negatives.push((u, v));
        }
    }
    Ok(EdgeSample {
        positives,
        negatives,
    })
}

fn bce_term(p: f64, label: bool) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if label {
        -ln(p)
    } else {
        -ln(1.0 - p)
    }
}

/// Mean binary cross-entropy of the dot-product decoder over the sample.
pub fn edge_rec_loss(emb: &EmbeddingPair, params: &HenclerParams, sample: &EdgeSample) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = emb.e.rows();
    let m = params.get("proj.u")?.t_matmul(params.get("proj.v")?)?;
    let left = emb.e.matmul(&m)?;
    let mut total = 0.0;
    for (pairs, label) in [(&sample.positives, true), (&sample.negatives, false)] {
        for &(u, v) in pairs.iter() {
            if u >= n || v >= n {
                return Err(Error::NodeOutOfRange {
                    index: u.max(v),
                    num_nodes: n,
                });
            }
            let logit: f64 = left.row(u).iter().zip(emb.r.row(v)).map(|(a, b)| a * b).sum();
            total += bce_term(sigmoid(logit), label);
        }
    }
    Ok(total / sample.len() as f64)
}

/// Every enabled term, computed without a tape.
pub fn total_loss(
    input: &Matrix,
    features: &Matrix,
    params: &HenclerParams,
    sample: &EdgeSample,
    terms: LossTerms,
) -> Result<LossBreakdown> {
    let (sf, emb, sigma) = crate::model::forward(input, params)?;
    let mut out = LossBreakdown::default();
    if terms.wksvd() {
        let deg = compute_degrees(&sf);
        out.wksvd = wksvd_loss(&sf, &emb, &sigma, &deg, params.get("proj.u")?, params.get("proj.v")?)?;
    }
    if terms.reconstruction() {
        out.node_rec = node_rec_loss(&crate::model::decode_nodes(&emb, params)?, features)?;
        out.edge_rec = edge_rec_loss(&emb, params, sample)?;
    }
    Ok(out)
}

/// Term variables recorded by [`build_objective`].
#[derive(Debug, Clone, Copy)]
pub struct Objective {
    pub total: Var,
    pub wksvd: Option<Var>,
    pub node_rec: Option<Var>,
    pub edge_rec: Option<Var>,
    pub forward: ForwardVars,
}

impl Objective {
    pub fn breakdown(&self, t: &Tape) -> LossBreakdown {
        let get = |v: Option<Var>| v.map_or(0.0, |v| t.scalar(v));
        LossBreakdown {
            wksvd: get(self.wksvd),
            node_rec: get(self.node_rec),
            edge_rec: get(self.edge_rec),
        }
    }
}

/// Tape version of the wKSVD loss on recorded forward variables.
pub fn build_wksvd(t: &mut Tape, fw: &ForwardVars) -> Result<Var> {
    let degree = |t: &mut Tape, rows: Var, cols: Var| -> Result<Var> {
        let s = t.col_sum(cols)?;
        let p = t.mul(rows, s)?;
        let d = t.row_sum(p)?;
        let d = t.clamp(d, DEGREE_EPS, f64::INFINITY)?;
        t.reciprocal(d)
    };
    let w1 = degree(t, fw.phi, fw.psi)?;
    let w2 = degree(t, fw.psi, fw.phi)?;
    let sig_inv = t.reciprocal(fw.sigma)?;
    let weighted_quad = |t: &mut Tape, x: Var, w: Var| -> Result<Var> {
        let sq = t.square(x)?;
        let q = t.mul(sq, sig_inv)?;
        let q = t.row_sum(q)?;
        let q = t.mul(q, w)?;
        t.sum(q)
    };
    let t1 = weighted_quad(t, fw.e, w1)?;
    let t2 = weighted_quad(t, fw.r, w2)?;
    let ut = t.transpose(fw.u)?;
    let uv = t.matmul(ut, fw.v)?;
    let t3 = t.trace(uv)?;
    let ww = t.mul(w1, w2)?;
    let ww = t.sqrt(ww)?;
    let pp = t.mul(fw.phi, fw.psi)?;
    let pp = t.row_sum(pp)?;
    let t4 = t.mul(ww, pp)?;
    let t4 = t.sum(t4)?;
    let a = t.sub(t3, t1)?;
    let a = t.sub(a, t2)?;
    t.add(a, t4)
}

fn build_mean_bce(t: &mut Tape, fw: &ForwardVars, sample: &EdgeSample) -> Result<Var> {
    let mut parts = Vec::with_capacity(2);
    for (pairs, label) in [(&sample.positives, true), (&sample.negatives, false)] {
        if pairs.is_empty() {
            continue;
        }
        let logits = build_edge_logits(t, fw, pairs)?;
        let p = t.sigmoid(logits)?;
        let p = t.clamp(p, PROB_EPS, 1.0 - PROB_EPS)?;
        let q = if label {
            p
        } else {
            let neg = t.scale(p, -1.0)?;
            t.add_scalar(neg, 1.0)?
        };
        let l = t.log(q)?;
        parts.push(t.sum(l)?);
    }
    let mut acc = parts[0];
    for &p in &parts[1..] {
        acc = t.add(acc, p)?;
    }
    t.scale(acc, -1.0 / sample.len() as f64)
}

/// Records the enabled loss terms for `input = [X ‖ PE]` and reconstruction
/// target `features`.
pub fn build_objective(
    t: &mut Tape,
    b: &Bindings,
    params: &HenclerParams,
    input: Var,
    features: &Matrix,
    sample: &EdgeSample,
    terms: LossTerms,
) -> Result<Objective> {
    let fw = build_forward(t, b, params.tie_maps(), input)?;
    let wksvd = if terms.wksvd() { Some(build_wksvd(t, &fw)?) } else { None };
    let (node_rec, edge_rec) = if terms.reconstruction() {
        if sample.is_empty() {
            return Err(Error::EmptyInput);
        }
        let recon = build_decode_nodes(t, b, fw.e, fw.r)?;
        let target = t.leaf(features.clone())?;
        let diff = t.sub(recon, target)?;
        let sq = t.square(diff)?;
        let s = t.sum(sq)?;
        let node = t.scale(s, 1.0 / features.rows() as f64)?;
        (Some(node), Some(build_mean_bce(t, &fw, sample)?))
    } else {
        (None, None)
    };
    let mut total: Option<Var> = None;
    for v in [wksvd, node_rec, edge_rec].into_iter().flatten() {
        total = Some(match total {
            Some(acc) => t.add(acc, v)?,
            None => v,
        });
    }
    Ok(Objective {
        total: total.expect("at least one loss term is enabled"),
        wksvd,
        node_rec,
        edge_rec,
        forward: fw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, model_input, ModelDims};

    fn factors(n: usize, d: usize, seed: u64) -> SimilarityFactor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SimilarityFactor::new(
            Matrix::from_fn(n, d, |_, _| rng.random_range(0.0..1.0)),
            Matrix::from_fn(n, d, |_, _| rng.random_range(0.0..1.0)),
        )
        .unwrap()
    }

    #[test]
    fn degrees_of_all_ones() {
        let sf = SimilarityFactor::new(Matrix::filled(4, 1, 1.0), Matrix::filled(4, 1, 1.0)).unwrap();
        let d = compute_degrees(&sf);
        assert_eq!(d.d1, alloc::vec![4.0; 4]);
        assert_eq!(d.d2, alloc::vec![4.0; 4]);
    }

    #[test]
    fn orthogonal_rows_clamp() {
        let sf = SimilarityFactor::new(Matrix::row_vector(&[1.0, 0.0]), Matrix::row_vector(&[0.0, 1.0])).unwrap();
        assert_eq!(compute_degrees(&sf).d1, alloc::vec![DEGREE_EPS]);
    }

    #[test]
    fn degrees_match_materialized_similarity() {
        let sf = factors(5, 3, 1);
        let s = sf.similarity();
        let d = compute_degrees(&sf);
        for (a, b) in d.d1.iter().zip(s.row_sums()) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in d.d2.iter().zip(s.col_sums()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn single_node_loss_is_zero() {
        let one = Matrix::filled(1, 1, 1.0);
        let sf = SimilarityFactor::new(one.clone(), one.clone()).unwrap();
        let emb = EmbeddingPair::new(one.clone(), one.clone()).unwrap();
        let d = compute_degrees(&sf);
        assert_eq!(d.d1, alloc::vec![1.0]);
        assert_eq!(wksvd_loss(&sf, &emb, &[1.0], &d, &one, &one).unwrap(), 0.0);
    }

    #[test]
    fn zero_projections_leave_cross_term() {
        let sf = factors(6, 3, 2);
        let d = compute_degrees(&sf);
        let z = Matrix::zeros(3, 2);
        let emb = EmbeddingPair::new(Matrix::zeros(6, 2), Matrix::zeros(6, 2)).unwrap();
        let got = wksvd_loss(&sf, &emb, &[0.5, 0.5], &d, &z, &z).unwrap();
        let want: f64 = (0..6)
            .map(|v| {
                let pp: f64 = (0..3).map(|j| sf.phi.get(v, j) * sf.psi.get(v, j)).sum();
                (1.0 / (d.d1[v] * d.d2[v])).sqrt() * pp
            })
            .sum();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn node_rec_examples() {
        let x = Matrix::from_fn(4, 3, |i, j| (i * j) as f64);
        assert_eq!(node_rec_loss(&x, &x).unwrap(), 0.0);
        assert_eq!(node_rec_loss(&x.map(|v| v + 1.0), &x).unwrap(), 3.0);
    }

    fn path(n: usize) -> AttributedGraph {
        let edges = (0..n - 1).map(|i| (i, i + 1)).collect();
        AttributedGraph::new(Matrix::zeros(n, 1), edges, false).unwrap()
    }

    #[test]
    fn single_edge_is_repeated() {
        let g = AttributedGraph::new(Matrix::zeros(3, 1), alloc::vec![(0, 2)], true).unwrap();
        let s = sample_edges(&g, 0).unwrap();
        assert_eq!(s.positives, alloc::vec![(0, 2); 6]);
        assert_eq!(s.negatives.len(), 6);
    }

    #[test]
    fn negatives_avoid_edges() {
        let g = path(3);
        let s = sample_edges(&g, 5).unwrap();
        for &(u, v) in &s.negatives {
            assert_ne!(u, v);
            assert!(!g.has_edge(u, v));
        }
        for &(u, v) in &s.positives {
            assert!(g.has_edge(u, v));
        }
    }

    #[test]
    fn complete_graph_has_no_negatives() {
        let edges = alloc::vec![(0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0), (0, 0)];
        let g = AttributedGraph::new(Matrix::zeros(3, 1), edges, true).unwrap();
        assert_eq!(sample_edges(&g, 0), Err(Error::CompleteGraph));
        let empty = AttributedGraph::new(Matrix::zeros(3, 1), Vec::new(), true).unwrap();
        assert_eq!(sample_edges(&empty, 0), Err(Error::EmptyEdgeSet));
    }

    #[test]
    fn loss_terms_parse() {
        assert_eq!("all".parse::<LossTerms>().unwrap(), LossTerms::All);
        assert!(!LossTerms::Wksvd.reconstruction());
        assert!(!LossTerms::Reconstr.wksvd());
        assert!("both".parse::<LossTerms>().is_err());
    }

    #[test]
    fn bce_at_half_and_at_clamp() {
        let d = ModelDims::with_widths(1, 1, 2, 2, 2);
        let p = HenclerParams::init(d, false, 0).unwrap();
        let emb = EmbeddingPair::new(Matrix::zeros(3, 2), Matrix::zeros(3, 2)).unwrap();
        let s = EdgeSample {
            positives: alloc::vec![(0, 1), (1, 2)],
            negatives: alloc::vec![(2, 0)],
        };
        assert!((edge_rec_loss(&emb, &p, &s).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_term(1.0, true) - -ln(1.0 - PROB_EPS)).abs() < 1e-20);
        assert!((bce_term(0.0, true) - -ln(PROB_EPS)).abs() < 1e-12);
    }

    #[test]
    fn tape_objective_matches_plain_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 12;
        let x = Matrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
        let edges = (0..n).flat_map(|i| [(i, (i + 1) % n), (i, (i + 5) % n)]).collect();
        let g = AttributedGraph::new(x, edges, true).unwrap();
        let pe = g.random_walk_pe(2).unwrap();
        let d = ModelDims::with_widths(3, 2, 6, 4, 4);
        let mut p = HenclerParams::init(d, false, 4).unwrap();
        for name in ["phi.norm.bias", "psi.norm.bias"] {
            p.set(name, Matrix::filled(1, 4, 0.7)).unwrap();
        }
        let input = model_input(&g, &pe).unwrap();
        let sample = sample_edges(&g, 9).unwrap();
        for terms in [LossTerms::All, LossTerms::Wksvd, LossTerms::Reconstr] {
            let plain = total_loss(&input, g.features(), &p, &sample, terms).unwrap();
            let mut t = Tape::new();
            let b = p.param_set().bind(&mut t).unwrap();
            let xi = t.leaf(input.clone()).unwrap();
            let obj = build_objective(&mut t, &b, &p, xi, g.features(), &sample, terms).unwrap();
            let taped = obj.breakdown(&t);
            for (a, b) in [
                (plain.wksvd, taped.wksvd),
                (plain.node_rec, taped.node_rec),
                (plain.edge_rec, taped.edge_rec),
            ] {
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{plain:?} vs {taped:?}");
            }
            assert!((t.scalar(obj.total) - plain.total()).abs() <= 1e-10 * plain.total().abs().max(1.0));
        }
        let (sf, _, _) = forward(&input, &p).unwrap();
        assert!(compute_degrees(&sf).d1.iter().all(|&d| d > DEGREE_EPS));
    }
}
