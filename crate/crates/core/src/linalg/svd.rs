//! Truncated (thin) SVD of a sparse matrix.
//!
//! Small problems are densified and solved exactly. Larger ones use a randomized
//! range finder with power iterations, which only needs products with `M` and
//! `Mᵀ`, followed by an exact SVD of the small projected matrix.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::sparse::{Csr, SparseMatrix};
use crate::error::{Error, Result};

/// Top-`m` singular triplets: `M ≈ U diag(sigma) Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinSvd {
    /// `rows × m`, orthonormal columns.
    pub u: DMatrix<f64>,
    /// Non-increasing, nonnegative.
    pub sigma: Vec<f64>,
    /// `cols × m`, orthonormal columns.
    pub v: DMatrix<f64>,
}

impl ThinSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Largest absolute deviation of `UᵀU` and `VᵀV` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        gram_error(&self.u).max(gram_error(&self.v))
    }

    /// Dense `U Σ Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (c, s) in self.sigma.iter().enumerate() {
            us.column_mut(c).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

fn gram_error(q: &DMatrix<f64>) -> f64 {
    let g = q.transpose() * q;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdOptions {
    pub power_iters: usize,
    pub oversample: usize,
    /// Use the exact dense solver when `min(rows, cols)` is at most this.
    pub dense_limit: usize,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions {
            power_iters: 4,
            oversample: 10,
            dense_limit: 200,
        }
    }
}

pub fn thin_svd(matrix: &SparseMatrix, m: usize, seed: u64) -> Result<ThinSvd> {
    thin_svd_with(matrix, m, seed, &SvdOptions::default())
}

pub fn thin_svd_with(
    matrix: &SparseMatrix,
    m: usize,
    seed: u64,
    opts: &SvdOptions,
) -> Result<ThinSvd> {
    let min_dim = matrix.rows().min(matrix.cols());
    if m == 0 || m > min_dim {
        return Err(Error::InvalidParameter(format!(
            "rank m = {m} must lie in 1..={min_dim} for a {}x{} matrix",
            matrix.rows(),
            matrix.cols()
        )));
    }
    if let Some(&(i, j, _)) = matrix.entries().iter().find(|e| !e.2.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite matrix entry at ({i}, {j})"
        )));
    }

    let mut svd = if min_dim <= opts.dense_limit {
        dense_svd(matrix, m)
    } else {
        randomized_svd(matrix, m, seed, opts)
    };
    fix_signs(&mut svd);

    debug_assert!(
        svd.orthonormality_error() <= 1e-8,
        "thin_svd lost orthonormality"
    );
    debug_assert!(
        svd.sigma.windows(2).all(|w| w[0] >= w[1]),
        "thin_svd sigma not sorted"
    );
    Ok(svd)
}

fn dense_svd(matrix: &SparseMatrix, m: usize) -> ThinSvd {
    let dense = DMatrix::from_row_slice(matrix.rows(), matrix.cols(), &matrix.to_dense());
    let svd = dense.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    truncate_sorted(&u, svd.singular_values.as_slice(), &v_t.transpose(), m)
}

/// Keeps the `m` largest singular triplets, in descending order.
fn truncate_sorted(u: &DMatrix<f64>, sigma: &[f64], v: &DMatrix<f64>, m: usize) -> ThinSvd {
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    order.truncate(m);
    ThinSvd {
        u: DMatrix::from_fn(u.nrows(), m, |r, c| u[(r, order[c])]),
        sigma: order.iter().map(|&k| sigma[k].max(0.0)).collect(),
        v: DMatrix::from_fn(v.nrows(), m, |r, c| v[(r, order[c])]),
    }
}

fn randomized_svd(matrix: &SparseMatrix, m: usize, seed: u64, opts: &SvdOptions) -> ThinSvd {
    let a = Csr::from_coo(matrix);
    let at = a.transpose();
    let sketch = (m + opts.oversample).min(matrix.rows().min(matrix.cols()));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian: Vec<f64> = (0..matrix.cols() * sketch)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let test = DMatrix::from_row_slice(matrix.cols(), sketch, &gaussian);

    let mut q = orthonormalize(spmm(&a, &test));
    for _ in 0..opts.power_iters {
        let z = orthonormalize(spmm(&at, &q));
        q = orthonormalize(spmm(&a, &z));
    }

    // Mᵀ Q = Bᵀ with B = Qᵀ M; Bᵀ = W S Zᵀ gives M ≈ (Q Z) S Wᵀ.
    let bt = spmm(&at, &q);
    let svd = bt.svd(true, true);
    let w = svd.u.expect("u requested");
    let z = svd.v_t.expect("v_t requested").transpose();
    let u = &q * z;
    truncate_sorted(&u, svd.singular_values.as_slice(), &w, m)
}

fn orthonormalize(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

/// Sparse-times-dense product, parallel over output rows.
fn spmm(a: &Csr, dense: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.cols, dense.nrows());
    let k = dense.ncols();
    let rows_major: Vec<f64> = dense.transpose().as_slice().to_vec();
    let mut out = vec![0.0; a.rows * k];
    out.par_chunks_mut(k.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            for p in a.indptr[i]..a.indptr[i + 1] {
                let col = a.indices[p];
                let val = a.values[p];
                let src = &rows_major[col * k..(col + 1) * k];
                for (o, s) in row.iter_mut().zip(src) {
                    *o += val * s;
                }
            }
        });
    DMatrix::from_row_slice(a.rows, k, &out)
}

/// Makes the largest-magnitude entry of every `U` column nonnegative, flipping
/// the matching `V` column with it.
fn fix_signs(svd: &mut ThinSvd) {
    for c in 0..svd.sigma.len() {
        let col = svd.u.column(c);
        let mut best = 0;
        for r in 1..col.len() {
            if col[r].abs() > col[best].abs() {
                best = r;
            }
        }
        if !col.is_empty() && col[best] < 0.0 {
            svd.u.column_mut(c).neg_mut();
            svd.v.column_mut(c).neg_mut();
        }
    }
}
