//! Seeded k-means++ with Lloyd refinement and restarts.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub k: usize,
    pub restarts: usize,
    pub max_iterations: usize,
    pub seed: u64,
}

impl KMeansOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            restarts: 10,
            max_iterations: 300,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub assignment: Vec<usize>,
    pub centroids: Matrix,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
    /// Inertia after every Lloyd iteration of the winning restart.
    pub trace: Vec<f64>,
}

/// Assignment with the lowest inertia over `restarts` k-means++ runs.
pub fn kmeans(points: &Matrix, k: usize, restarts: usize, seed: u64) -> Result<Vec<usize>> {
    let opts = KMeansOptions {
        restarts,
        ..KMeansOptions::new(k, seed)
    };
    kmeans_fit(points, &opts).map(|fit| fit.assignment)
}

pub fn kmeans_fit(points: &Matrix, opts: &KMeansOptions) -> Result<KMeansFit> {
    let n = points.rows();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if opts.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if opts.k > n {
        return Err(Error::TooManyClusters {
            k: opts.k,
            points: n,
        });
    }
    if !points.is_finite() {
        return Err(Error::NonFinite { op: "kmeans" });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<KMeansFit> = None;
    for _ in 0..opts.restarts.max(1) {
        let centroids = plus_plus_init(points, opts.k, &mut rng);
        let fit = lloyd(points, centroids, opts.max_iterations);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_init(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = points.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                acc += d;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            // every point coincides with a chosen centre
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

fn assign(points: &Matrix, centroids: &Matrix, assignment: &mut [usize], dists: &mut [f64]) {
    for i in 0..points.rows() {
        let p = points.row(i);
        let mut best_c = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..centroids.rows() {
            let d = sq_dist(p, centroids.row(c));
            // strict comparison keeps the lowest index on ties
            if d < best_d {
                best_d = d;
                best_c = c;
            }
        }
        assignment[i] = best_c;
        dists[i] = best_d;
    }
}

fn update(points: &Matrix, assignment: &[usize], k: usize) -> (Matrix, Vec<usize>) {
    let mut centroids = Matrix::zeros(k, points.cols());
    let mut counts = vec![0usize; k];
    for (i, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        for (s, &x) in centroids.row_mut(c).iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let inv = 1.0 / count as f64;
            centroids.row_mut(c).iter_mut().for_each(|x| *x *= inv);
        }
    }
    (centroids, counts)
}

fn inertia(points: &Matrix, centroids: &Matrix, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(points.row(i), centroids.row(c)))
        .sum()
}

fn lloyd(points: &Matrix, mut centroids: Matrix, max_iterations: usize) -> KMeansFit {
    let n = points.rows();
    let k = centroids.rows();
    let mut assignment = vec![usize::MAX; n];
    let mut next = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut trace = Vec::new();
    for _ in 0..max_iterations.max(1) {
        assign(points, &centroids, &mut next, &mut dists);
        let (mut updated, mut counts) = update(points, &next, k);
        // Empty clusters take the point farthest from its own centroid.
        while let Some(empty) = counts.iter().position(|&c| c == 0) {
            let far = (0..n)
                .filter(|&i| counts[next[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            let Some(far) = far else { break };
            next[far] = empty;
            dists[far] = 0.0;
            (updated, counts) = update(points, &next, k);
        }
        centroids = updated;
        trace.push(inertia(points, &centroids, &next));
        if next == assignment {
            break;
        }
        assignment.copy_from_slice(&next);
    }
    KMeansFit {
        inertia: *trace.last().expect("one iteration"),
        assignment,
        centroids,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(n_per: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (label, cx) in [(0usize, -5.0), (1, 5.0)] {
            for _ in 0..n_per {
                rows.push([cx + noise.sample(&mut rng), noise.sample(&mut rng)]);
                labels.push(label);
            }
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn separated_blobs_are_recovered() {
        let (pts, labels) = blobs(30, 1);
        let a = kmeans(&pts, 2, 10, 7).unwrap();
        // ±5 centres with 0.1 noise: every point is far closer to its own centre
        for i in 0..pts.rows() {
            for j in 0..pts.rows() {
                assert_eq!(labels[i] == labels[j], a[i] == a[j]);
            }
        }
    }

    #[test]
    fn single_cluster() {
        let (pts, _) = blobs(5, 2);
        assert!(kmeans(&pts, 1, 3, 0).unwrap().iter().all(|&c| c == 0));
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let pts = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 3.0], [2.0, 2.0]]).unwrap();
        let mut a = kmeans(&pts, 4, 2, 11).unwrap();
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3]);
    }

    #[test]
    fn inertia_trace_is_non_increasing() {
        for seed in 0..20 {
            let pts = Matrix::from_fn(40, 3, |i, j| {
                let x = ((i * 7919 + j * 104729 + seed) % 1000) as f64;
                x / 100.0
            });
            let fit = kmeans_fit(&pts, &KMeansOptions::new(5, seed as u64)).unwrap();
            for w in fit.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "trace increased: {:?}", fit.trace);
            }
        }
    }

    #[test]
    fn duplicate_points_with_empty_clusters() {
        let pts = Matrix::from_rows(&[[1.0], [1.0], [1.0], [2.0]]).unwrap();
        let fit = kmeans_fit(&pts, &KMeansOptions::new(3, 0)).unwrap();
        assert!(fit.assignment.iter().all(|&c| c < 3));
        assert!(fit.inertia.abs() < 1e-12);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let (pts, _) = blobs(25, 3);
        let a = kmeans_fit(&pts, &KMeansOptions::new(4, 99)).unwrap();
        let b = kmeans_fit(&pts, &KMeansOptions::new(4, 99)).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.inertia.to_bits(), b.inertia.to_bits());
    }

    #[test]
    fn errors() {
        assert!(matches!(
            kmeans(&Matrix::zeros(0, 2), 1, 1, 0),
            Err(Error::EmptyInput)
        ));
        assert!(matches!(
            kmeans(&Matrix::zeros(2, 2), 3, 1, 0),
            Err(Error::TooManyClusters { .. })
        ));
    }
}
