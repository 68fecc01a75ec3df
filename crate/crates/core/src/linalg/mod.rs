//! Sparse accumulation and truncated SVD used by CCA training.

mod moments;
mod sparse;
mod svd;

pub use moments::{accumulate_cross_covariance, accumulate_diag_second_moment, SecondMoments};
pub use sparse::{scale_by_diag, DiagMatrix, ScaledMatrix, SparseMatrix, SparseVec};
pub use svd::{thin_svd, thin_svd_with, SvdOptions, ThinSvd};
