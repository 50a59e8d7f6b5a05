//! Thin SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! Columns of a working copy of `A` are orthogonalized pairwise; at
//! convergence their norms are the singular values and the accumulated
//! rotations form the right singular vectors. One-sided Jacobi is slower than
//! bidiagonalization on large inputs but computes small singular values to
//! high relative accuracy, which is what the dual oracle needs.

use alloc::vec;
use alloc::vec::Vec;

use super::Matrix;
use crate::math::{abs, sqrt};
use crate::{Error, Result};

const MAX_SWEEPS: usize = 80;

#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows × rank`, orthonormal columns.
    pub left: Matrix,
    /// Descending, non-negative.
    pub singular_values: Vec<f64>,
    /// `cols × rank`, orthonormal columns.
    pub right: Matrix,
}

impl Svd {
    /// `left · diag(σ) · rightᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        self.left
            .scale_cols(&self.singular_values)
            .matmul_t(&self.right)
            .expect("factor shapes are consistent")
    }
}

/// Leading `rank` singular triplets of `m`.
pub fn thin_svd(m: &Matrix, rank: usize) -> Result<Svd> {
    if !m.is_finite() {
        return Err(Error::NonFinite { op: "thin_svd" });
    }
    let (rows, cols) = m.shape();
    if rank > rows.min(cols) {
        return Err(Error::InvalidArgument(alloc::format!(
            "rank {rank} exceeds min({rows}, {cols})"
        )));
    }
    if rows < cols {
        let t = thin_svd(&m.transpose(), rank)?;
        return Ok(Svd {
            left: t.right,
            singular_values: t.singular_values,
            right: t.left,
        });
    }
    let full = jacobi_tall(m)?;
    let keep: Vec<usize> = (0..rank).collect();
    Ok(Svd {
        left: full.left.select_cols(&keep),
        singular_values: full.singular_values[..rank].to_vec(),
        right: full.right.select_cols(&keep),
    })
}

/// Full SVD of a matrix with `rows ≥ cols`: `left` is `rows × cols`.
fn jacobi_tall(m: &Matrix) -> Result<Svd> {
    let (rows, n) = m.shape();
    // Column-major working copies so that column pairs are contiguous.
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = f64::EPSILON * rows.max(1) as f64;

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (wp, wq) = (&w[p], &w[q]);
                    let mut a = 0.0;
                    let mut b = 0.0;
                    let mut g = 0.0;
                    for (x, y) in wp.iter().zip(wq) {
                        a += x * x;
                        b += y * y;
                        g += x * y;
                    }
                    (a, b, g)
                };
                if gamma == 0.0 || abs(gamma) <= tol * sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (abs(zeta) + sqrt(1.0 + zeta * zeta));
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::SvdNoConvergence { sweeps: MAX_SWEEPS });
    }

    let norms: Vec<f64> = w.iter().map(|c| sqrt(c.iter().map(|x| x * x).sum())).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));

    let sigma_max = norms.iter().cloned().fold(0.0, f64::max);
    let cutoff = sigma_max * f64::EPSILON * rows.max(n) as f64;
    let mut left_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut singular_values = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        let s = norms[j];
        if s > cutoff && s > 0.0 {
            left_cols.push(w[j].iter().map(|x| x / s).collect());
        } else {
            left_cols.push(vec![0.0; rows]);
            deficient.push(slot);
        }
        singular_values.push(s);
    }
    complete_basis(&mut left_cols, &deficient);

    let left = Matrix::from_fn(rows, n, |i, j| left_cols[j][i]);
    let right = Matrix::from_fn(n, n, |i, j| v[order[j]][i]);
    Ok(Svd {
        left,
        singular_values,
        right,
    })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let (cp, cq) = (&mut head[p], &mut tail[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills the `deficient` columns with unit vectors orthogonal to all others
/// (modified Gram-Schmidt against the standard basis, applied twice).
fn complete_basis(cols: &mut [Vec<f64>], deficient: &[usize]) {
    if deficient.is_empty() {
        return;
    }
    let rows = cols[0].len();
    let mut filled: Vec<bool> = vec![true; cols.len()];
    for &d in deficient {
        filled[d] = false;
    }
    let mut candidate = 0;
    for &d in deficient {
        while candidate < rows {
            let mut x = vec![0.0; rows];
            x[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for (j, c) in cols.iter().enumerate() {
                    if !filled[j] {
                        continue;
                    }
                    let dot: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
                    for (xi, ci) in x.iter_mut().zip(c) {
                        *xi -= dot * ci;
                    }
                }
            }
            let norm = sqrt(x.iter().map(|v| v * v).sum());
            if norm > 0.5 {
                cols[d] = x.into_iter().map(|v| v / norm).collect();
                filled[d] = true;
                break;
            }
        }
    }
}
