//! Sparse vectors and coordinate-list matrices.

use crate::error::{Error, Result};

/// A sparse feature vector with explicit dimensionality.
///
/// Indices are strictly increasing, no stored value is zero and every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVec {
    /// Builds a vector from `(index, value)` entries in any order.
    ///
    /// Zero values are discarded. Duplicate indices, out-of-range indices and
    /// non-finite values are rejected.
    pub fn new(dim: usize, mut entries: Vec<(usize, f64)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "sparse vector dim must be positive".into(),
            ));
        }
        entries.sort_unstable_by_key(|&(i, _)| i);
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            if i >= dim {
                return Err(Error::InvalidInput(format!(
                    "index {i} out of range for dim {dim}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite value at index {i}"
                )));
            }
            if indices.last() == Some(&i) {
                return Err(Error::InvalidInput(format!("duplicate index {i}")));
            }
            if v != 0.0 {
                indices.push(i);
                values.push(v);
            }
        }
        Ok(SparseVec {
            dim,
            indices,
            values,
        })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "sparse vector dim must be positive");
        SparseVec {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Indicator vector with value 1 at each index. Indices may repeat.
    pub fn binary(dim: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut idx: Vec<usize> = indices.into_iter().collect();
        idx.sort_unstable();
        idx.dedup();
        Self::new(dim, idx.into_iter().map(|i| (i, 1.0)).collect())
    }

    pub fn from_dense(values: &[f64]) -> Result<Self> {
        let entries = values
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, v)| v != 0.0)
            .collect();
        Self::new(values.len(), entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&index) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

/// Diagonal matrix stored as its dense diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagMatrix {
    diag: Vec<f64>,
}

impl DiagMatrix {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidParameter(
                "diagonal matrix dim must be positive".into(),
            ));
        }
        if let Some(i) = diag.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "diagonal entry {i} must be finite and nonnegative"
            )));
        }
        Ok(DiagMatrix { diag })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub(crate) fn from_raw(diag: Vec<f64>) -> Self {
        DiagMatrix { diag }
    }
}

/// Coordinate-list sparse matrix with unique `(row, col)` entries sorted row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    /// Builds a matrix from triplets in any order. Duplicates are rejected,
    /// explicit zeros dropped.
    pub fn new(rows: usize, cols: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        for w in entries.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(Error::InvalidInput(format!(
                    "duplicate matrix entry ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }
        for &(i, j, v) in &entries {
            if i >= rows || j >= cols {
                return Err(Error::InvalidInput(format!(
                    "entry ({i}, {j}) outside {rows}x{cols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite entry at ({i}, {j})"
                )));
            }
        }
        entries.retain(|e| e.2 != 0.0);
        Ok(SparseMatrix {
            rows,
            cols,
            entries,
        })
    }

    /// Entries already sorted, unique, in range. Finiteness is not checked.
    pub(crate) fn from_sorted_unchecked(
        rows: usize,
        cols: usize,
        entries: Vec<(usize, usize, f64)>,
    ) -> Self {
        debug_assert!(entries
            .windows(2)
            .all(|w| (w[0].0, w[0].1) < (w[1].0, w[1].1)));
        SparseMatrix {
            rows,
            cols,
            entries,
        }
    }

    pub fn from_dense(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        assert_eq!(
            data.len(),
            rows * cols,
            "dense data must be rows * cols long"
        );
        let entries = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, data[i * cols + j]))
            .filter(|e| e.2 != 0.0)
            .collect();
        Self::new(rows, cols, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self
            .entries
            .binary_search_by_key(&(i, j), |&(r, c, _)| (r, c))
        {
            Ok(pos) => self.entries[pos].2,
            Err(_) => 0.0,
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for &(i, j, v) in &self.entries {
            out[i * self.cols + j] = v;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.2 * e.2).sum::<f64>().sqrt()
    }
}

/// Result of [`scale_by_diag`]: the normalized matrix over retained coordinates
/// plus maps from retained position back to the original index.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledMatrix {
    pub matrix: SparseMatrix,
    pub retained_rows: Vec<usize>,
    pub retained_cols: Vec<usize>,
}

/// Computes `D1^{-1/2} Ω D2^{-1/2}`.
///
/// Rows with a zero `d1` entry and columns with a zero `d2` entry are dropped;
/// the surviving coordinates are renumbered densely and recorded in the
/// retained-index maps.
pub fn scale_by_diag(
    omega: &SparseMatrix,
    d1: &DiagMatrix,
    d2: &DiagMatrix,
) -> Result<ScaledMatrix> {
    if d1.dim() != omega.rows() {
        return Err(Error::DimensionMismatch {
            index: 0,
            expected: omega.rows(),
            found: d1.dim(),
        });
    }
    if d2.dim() != omega.cols() {
        return Err(Error::DimensionMismatch {
            index: 1,
            expected: omega.cols(),
            found: d2.dim(),
        });
    }

    let (row_pos, retained_rows) = retain_positive(d1.diag());
    let (col_pos, retained_cols) = retain_positive(d2.diag());
    let row_scale: Vec<f64> = retained_rows.iter().map(|&i| d1.diag()[i].sqrt()).collect();
    let col_scale: Vec<f64> = retained_cols.iter().map(|&j| d2.diag()[j].sqrt()).collect();

    let entries = omega
        .entries()
        .iter()
        .filter_map(|&(i, j, v)| {
            let r = row_pos[i]?;
            let c = col_pos[j]?;
            Some((r, c, v / (row_scale[r] * col_scale[c])))
        })
        .collect();

    Ok(ScaledMatrix {
        matrix: SparseMatrix::from_sorted_unchecked(
            retained_rows.len(),
            retained_cols.len(),
            entries,
        ),
        retained_rows,
        retained_cols,
    })
}

fn retain_positive(diag: &[f64]) -> (Vec<Option<usize>>, Vec<usize>) {
    let mut pos = vec![None; diag.len()];
    let mut retained = Vec::new();
    for (i, &v) in diag.iter().enumerate() {
        if v > 0.0 {
            pos[i] = Some(retained.len());
            retained.push(i);
        }
    }
    (pos, retained)
}

/// Compressed sparse row view used for repeated matrix products.
#[derive(Debug, Clone)]
pub(crate) struct Csr {
    pub rows: usize,
    pub cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn from_coo(m: &SparseMatrix) -> Self {
        let mut indptr = vec![0usize; m.rows() + 1];
        for &(i, _, _) in m.entries() {
            indptr[i + 1] += 1;
        }
        for i in 0..m.rows() {
            indptr[i + 1] += indptr[i];
        }
        // entries are row-major sorted, so a straight copy preserves CSR order
        let indices = m.entries().iter().map(|e| e.1).collect();
        let values = m.entries().iter().map(|e| e.2).collect();
        Csr {
            rows: m.rows(),
            cols: m.cols(),
            indptr,
            indices,
            values,
        }
    }

    pub fn transpose(&self) -> Csr {
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(self.values.len());
        for i in 0..self.rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                entries.push((self.indices[k], i, self.values[k]));
            }
        }
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        Csr::from_coo(&SparseMatrix::from_sorted_unchecked(
            self.cols, self.rows, entries,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_vec_sorts_and_drops_zeros() {
        let v = SparseVec::new(5, vec![(3, 2.0), (0, 1.0), (2, 0.0)]).unwrap();
        assert_eq!(v.indices(), &[0, 3]);
        assert_eq!(v.values(), &[1.0, 2.0]);
        assert_eq!(v.get(3), 2.0);
        assert_eq!(v.get(2), 0.0);
    }

    #[test]
    fn sparse_vec_rejects_bad_entries() {
        assert!(SparseVec::new(3, vec![(3, 1.0)]).is_err());
        assert!(SparseVec::new(3, vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(SparseVec::new(3, vec![(1, f64::NAN)]).is_err());
        assert!(SparseVec::new(0, vec![]).is_err());
    }

    #[test]
    fn matrix_rejects_duplicates_and_out_of_range() {
        assert!(SparseMatrix::new(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0)]).is_err());
        assert!(SparseMatrix::new(2, 2, vec![(2, 0, 1.0)]).is_err());
        assert!(SparseMatrix::new(2, 2, vec![(0, 1, f64::INFINITY)]).is_err());
    }

    #[test]
    fn scale_single_entry() {
        let omega = SparseMatrix::new(1, 1, vec![(0, 0, 4.0)]).unwrap();
        let d1 = DiagMatrix::new(vec![4.0]).unwrap();
        let d2 = DiagMatrix::new(vec![1.0]).unwrap();
        let s = scale_by_diag(&omega, &d1, &d2).unwrap();
        assert_eq!(s.matrix.entries(), &[(0, 0, 2.0)]);
    }

    #[test]
    fn scale_drops_zero_diagonal_column() {
        let omega = SparseMatrix::new(2, 3, vec![(0, 0, 1.0), (1, 2, 3.0)]).unwrap();
        let d1 = DiagMatrix::new(vec![1.0, 9.0]).unwrap();
        let d2 = DiagMatrix::new(vec![1.0, 0.0, 1.0]).unwrap();
        let s = scale_by_diag(&omega, &d1, &d2).unwrap();
        assert_eq!(s.retained_cols, vec![0, 2]);
        assert_eq!(s.retained_rows, vec![0, 1]);
        assert_eq!(s.matrix.cols(), 2);
        assert_eq!(s.matrix.get(1, 1), 1.0);
    }

    #[test]
    fn scale_rejects_mismatched_diag() {
        let omega = SparseMatrix::new(2, 2, vec![]).unwrap();
        let d = DiagMatrix::new(vec![1.0]).unwrap();
        assert!(scale_by_diag(&omega, &d, &d).is_err());
    }

    #[test]
    fn csr_transpose_round_trip() {
        let m = SparseMatrix::new(2, 3, vec![(0, 2, 1.0), (1, 0, 2.0), (1, 2, 3.0)]).unwrap();
        let csr = Csr::from_coo(&m);
        let tt = csr.transpose().transpose();
        assert_eq!(tt.indptr, csr.indptr);
        assert_eq!(tt.indices, csr.indices);
        assert_eq!(tt.values, csr.values);
    }
}
