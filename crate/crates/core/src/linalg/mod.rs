//! Dense real-matrix kernels: the matrix type, thin SVD and k-means.

mod kmeans;
mod matrix;
mod svd;

pub use kmeans::{kmeans, kmeans_fit, KMeansFit, KMeansOptions};
pub use matrix::{frobenius_relerr, Matrix};
pub(crate) use matrix::gemm;
pub use svd::{thin_svd, Svd};
