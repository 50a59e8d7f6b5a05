//! Exact dual side: centering, degree-normalized SVD biclustering,
//! stationarity and eigen-system residuals, and a Fenchel-Young sampler.
//!
//! Everything here materializes `S` and is meant for small graphs and as an
//! oracle for the primal training path.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{frobenius_relerr, kmeans, thin_svd, Matrix};
use crate::loss::DEGREE_EPS;
use crate::math::{abs, hypot, sqrt};
use crate::model::SimilarityFactor;
use crate::{Error, Result};

fn check_weights(w: &[f64]) -> Result<()> {
    match w.iter().position(|&x| !x.is_finite() || x <= 0.0) {
        Some(index) => Err(Error::NonPositiveWeight { index, value: w[index] }),
        None => Ok(()),
    }
}

fn weighted_mean_row(m: &Matrix, w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    let mut mean = alloc::vec![0.0; m.cols()];
    for (i, &wi) in w.iter().enumerate() {
        for (acc, &x) in mean.iter_mut().zip(m.row(i)) {
            *acc += wi * x;
        }
    }
    mean.iter_mut().for_each(|x| *x /= total);
    mean
}

/// Subtracts the `weights`-weighted mean row from every row.
pub fn center_primal(features: &Matrix, weights: &[f64]) -> Result<Matrix> {
    if weights.len() != features.rows() {
        return Err(Error::LengthMismatch {
            left: weights.len(),
            right: features.rows(),
        });
    }
    check_weights(weights)?;
    let mean = weighted_mean_row(features, weights);
    Ok(Matrix::from_fn(features.rows(), features.cols(), |i, j| features.get(i, j) - mean[j]))
}

/// `M₁ S M₂ᵀ` with `M = I − 1 1ᵀW / (1ᵀW1)`, applied without forming `M`.
pub fn center_dual(s: &Matrix, w1: &[f64], w2: &[f64]) -> Result<Matrix> {
    if w1.len() != s.rows() || w2.len() != s.cols() {
        return Err(Error::LengthMismatch {
            left: w1.len() + w2.len(),
            right: s.rows() + s.cols(),
        });
    }
    check_weights(w1)?;
    check_weights(w2)?;
    // M₁S removes the weighted mean row; (·)M₂ᵀ the weighted mean column.
    let left = center_primal(s, w1)?;
    let total2: f64 = w2.iter().sum();
    let row_means: Vec<f64> = (0..left.rows())
        .map(|i| left.row(i).iter().zip(w2).map(|(x, w)| x * w).sum::<f64>() / total2)
        .collect();
    Ok(Matrix::from_fn(s.rows(), s.cols(), |i, j| left.get(i, j) - row_means[i]))
}

/// Singular triplets of `W₁^{1/2} S W₂^{1/2}` with the primal embeddings they
/// imply.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    /// `n×s`, orthonormal columns.
    pub h_e: Matrix,
    /// `m×s`, orthonormal columns.
    pub h_r: Matrix,
    /// Descending.
    pub sigma: Vec<f64>,
    /// `e_i = diag(σ) h_{e,i} / √w1_i`.
    pub e: Matrix,
    /// `r_j = diag(σ) h_{r,j} / √w2_j`.
    pub r: Matrix,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiclusterOptions {
    pub k: usize,
    /// Skip the leading singular pair.
    pub drop_leading: bool,
    pub kmeans_restarts: usize,
    pub seed: u64,
}

impl BiclusterOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            drop_leading: false,
            kmeans_restarts: 10,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bicluster {
    pub row_clusters: Vec<usize>,
    pub col_clusters: Vec<usize>,
    pub solution: DualSolution,
}

fn clamped_degrees(sums: Vec<f64>, side: &str) -> Vec<f64> {
    let clamped = sums.iter().filter(|&&d| d < DEGREE_EPS).count();
    if clamped > 0 {
        log::warn!("{clamped} {side} degree(s) below {DEGREE_EPS:e} were clamped");
    }
    sums.into_iter().map(|d| d.max(DEGREE_EPS)).collect()
}

/// `D₁^{-1/2} S D₂^{-1/2}` with clamped row and column sums.
pub fn normalized_similarity(s: &Matrix) -> (Matrix, Vec<f64>, Vec<f64>) {
    let d1 = clamped_degrees(s.row_sums(), "row");
    let d2 = clamped_degrees(s.col_sums(), "column");
    let a: Vec<f64> = d1.iter().map(|d| 1.0 / sqrt(*d)).collect();
    let b: Vec<f64> = d2.iter().map(|d| 1.0 / sqrt(*d)).collect();
    (s.scale_rows(&a).scale_cols(&b), d1, d2)
}

/// Thin SVD of the degree-normalized similarity with `W = D⁻¹`.
pub fn dual_solve(s: &Matrix, rank: usize, drop_leading: bool) -> Result<DualSolution> {
    if rank == 0 {
        return Err(Error::InvalidArgument("rank must be positive".into()));
    }
    let (normalized, d1, d2) = normalized_similarity(s);
    let skip = usize::from(drop_leading);
    let svd = thin_svd(&normalized, rank + skip)?;
    let keep: Vec<usize> = (skip..rank + skip).collect();
    let h_e = svd.left.select_cols(&keep);
    let h_r = svd.right.select_cols(&keep);
    let sigma = svd.singular_values[skip..].to_vec();
    let sqrt_d1: Vec<f64> = d1.iter().map(|d| sqrt(*d)).collect();
    let sqrt_d2: Vec<f64> = d2.iter().map(|d| sqrt(*d)).collect();
    let e = h_e.scale_cols(&sigma).scale_rows(&sqrt_d1);
    let r = h_r.scale_cols(&sigma).scale_rows(&sqrt_d2);
    Ok(DualSolution {
        h_e,
        h_r,
        sigma,
        e,
        r,
        w1: d1.iter().map(|d| 1.0 / d).collect(),
        w2: d2.iter().map(|d| 1.0 / d).collect(),
    })
}

/// Spectral biclustering: `k` singular pairs, then KMeans on the rows of `e`
/// and of `r` separately.
pub fn bicluster(s: &Matrix, opts: &BiclusterOptions) -> Result<Bicluster> {
    if opts.k < 2 {
        return Err(Error::InvalidArgument("bicluster needs k ≥ 2".into()));
    }
    let solution = dual_solve(s, opts.k, opts.drop_leading)?;
    let row_clusters = kmeans(&solution.e, opts.k, opts.kmeans_restarts, opts.seed)?;
    let col_clusters = kmeans(&solution.r, opts.k, opts.kmeans_restarts, opts.seed ^ 0x9e37_79b9)?;
    Ok(Bicluster {
        row_clusters,
        col_clusters,
        solution,
    })
}

fn sqrt_all(w: &[f64]) -> Vec<f64> {
    w.iter().map(|x| sqrt(*x)).collect()
}

/// Largest relative residual of the primal-dual relations at `solution`.
///
/// `U = Ψᵀ W₂^{1/2} H_r` and `V = Φᵀ W₁^{1/2} H_e` are rebuilt from the dual
/// variables; then `H_e Σ = W₁^{1/2} Φ U`, `H_r Σ = W₂^{1/2} Ψ V`, `E = ΦU`
/// and `R = ΨV` are checked.
pub fn stationarity_residual(sf: &SimilarityFactor, solution: &DualSolution) -> Result<f64> {
    let sw1 = sqrt_all(&solution.w1);
    let sw2 = sqrt_all(&solution.w2);
    if sf.phi.rows() != solution.h_e.rows() || sf.psi.rows() != solution.h_r.rows() {
        return Err(Error::ShapeMismatch {
            op: "stationarity_residual",
            lhs: (sf.phi.rows(), sf.psi.rows()),
            rhs: (solution.h_e.rows(), solution.h_r.rows()),
        });
    }
    let u = sf.psi.t_matmul(&solution.h_r.scale_rows(&sw2))?;
    let v = sf.phi.t_matmul(&solution.h_e.scale_rows(&sw1))?;
    let phi_u = sf.phi.matmul(&u)?;
    let psi_v = sf.psi.matmul(&v)?;
    let he_sigma = solution.h_e.scale_cols(&solution.sigma);
    let hr_sigma = solution.h_r.scale_cols(&solution.sigma);
    let residuals = [
        frobenius_relerr(&phi_u.scale_rows(&sw1), &he_sigma)?,
        frobenius_relerr(&psi_v.scale_rows(&sw2), &hr_sigma)?,
        frobenius_relerr(&phi_u, &solution.e)?,
        frobenius_relerr(&psi_v, &solution.r)?,
    ];
    Ok(residuals.into_iter().fold(0.0, f64::max))
}

/// Relative residual of the block eigen-system
/// `[[0, A], [Aᵀ, 0]] [H_e; H_r] = [H_e; H_r] Σ` with `A = W₁^{1/2} S W₂^{1/2}`.
pub fn eigen_form_check(s: &Matrix, solution: &DualSolution) -> Result<f64> {
    let a = s.scale_rows(&sqrt_all(&solution.w1)).scale_cols(&sqrt_all(&solution.w2));
    let top = a.matmul(&solution.h_r)?;
    let bottom = a.t_matmul(&solution.h_e)?;
    let he_sigma = solution.h_e.scale_cols(&solution.sigma);
    let hr_sigma = solution.h_r.scale_cols(&solution.sigma);
    let diff = hypot(top.sub(&he_sigma)?.frobenius_norm(), bottom.sub(&hr_sigma)?.frobenius_norm());
    let scale = hypot(he_sigma.frobenius_norm(), hr_sigma.frobenius_norm());
    Ok(diff / scale.max(f64::EPSILON))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FenchelYoungReport {
    pub samples: usize,
    /// Draws where `½w·eᵀΣ⁻¹e + ½hᵀΣh < √w·eᵀh − 1e-12`.
    pub violations: usize,
    /// Largest relative gap at the equality point `h = √w Σ⁻¹ e`.
    pub max_equality_gap: f64,
}

fn fy_sides(e: &[f64], h: &[f64], w: f64, sigma: &[f64]) -> (f64, f64) {
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for ((&ei, &hi), &si) in e.iter().zip(h).zip(sigma) {
        lhs += 0.5 * w * ei * ei / si + 0.5 * hi * hi * si;
        rhs += sqrt(w) * ei * hi;
    }
    (lhs, rhs)
}

/// Samples `num_samples` random `(e, h, w, Σ)` in dimensions `1..=max_dim`
/// and counts violations of the Fenchel-Young bound.
pub fn fenchel_young_check(num_samples: usize, max_dim: usize, seed: u64) -> FenchelYoungReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FenchelYoungReport {
        samples: num_samples,
        violations: 0,
        max_equality_gap: 0.0,
    };
    let log_uniform = |rng: &mut ChaCha8Rng| crate::math::exp(rng.random_range(-4.0..4.0));
    for _ in 0..num_samples {
        let dim = rng.random_range(1..=max_dim.max(1));
        let e: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let h: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let sigma: Vec<f64> = (0..dim).map(|_| log_uniform(&mut rng)).collect();
        let w = log_uniform(&mut rng);
        let (lhs, rhs) = fy_sides(&e, &h, w, &sigma);
        if lhs < rhs - 1e-12 {
            report.violations += 1;
        }
        let h_star: Vec<f64> = e.iter().zip(&sigma).map(|(ei, si)| sqrt(w) * ei / si).collect();
        let (lhs, rhs) = fy_sides(&e, &h_star, w, &sigma);
        let gap = abs(lhs - rhs) / abs(rhs).max(1.0);
        report.max_equality_gap = report.max_equality_gap.max(gap);
    }
    report
}
