//! Unnormalized second-moment accumulators.
//!
//! All sums are raw (no `1/n`, no centering). The `1/n` factors cancel in
//! `D1^{-1/2} Ω D2^{-1/2}`, so the normalized matrix is the same either way.
//!
//! Accumulators form a commutative monoid under [`SecondMoments::merge`], so
//! partial sums over shards can be combined in any order.

use std::collections::HashMap;

use super::sparse::{DiagMatrix, SparseMatrix, SparseVec};
use crate::error::{Error, Result};

/// `diag[i] = Σ_k v_k[i]²` over the stream.
pub fn accumulate_diag_second_moment<'a, I>(vectors: I, dim: usize) -> Result<DiagMatrix>
where
    I: IntoIterator<Item = &'a SparseVec>,
{
    if dim == 0 {
        return Err(Error::InvalidParameter("dim must be positive".into()));
    }
    let mut diag = vec![0.0; dim];
    for (k, v) in vectors.into_iter().enumerate() {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                index: k,
                expected: dim,
                found: v.dim(),
            });
        }
        for (i, x) in v.iter() {
            diag[i] += x * x;
        }
    }
    Ok(DiagMatrix::from_raw(diag))
}

/// `Ω[i][j] = Σ_k φ_k[i] ψ_k[j]` over the stream. Dimensions are taken from the
/// first pair; an empty stream is rejected because the shape is unknown.
pub fn accumulate_cross_covariance<'a, I>(pairs: I) -> Result<SparseMatrix>
where
    I: IntoIterator<Item = &'a (SparseVec, SparseVec)>,
{
    let mut iter = pairs.into_iter().peekable();
    let (d, dp) = match iter.peek() {
        Some((phi, psi)) => (phi.dim(), psi.dim()),
        None => {
            return Err(Error::Empty(
                "cross-covariance needs at least one pair".into(),
            ))
        }
    };
    let mut acc = SecondMoments::new(d, dp);
    for (k, (phi, psi)) in iter.enumerate() {
        acc.check(k, phi, psi)?;
        acc.add_cross(phi, psi);
    }
    Ok(acc.cross_covariance())
}

/// Joint accumulator for `D1`, `D2` and `Ω` in one pass.
#[derive(Debug, Clone)]
pub struct SecondMoments {
    input_dim: usize,
    output_dim: usize,
    count: usize,
    d1: Vec<f64>,
    d2: Vec<f64>,
    omega: HashMap<(usize, usize), f64>,
}

impl SecondMoments {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        SecondMoments {
            input_dim,
            output_dim,
            count: 0,
            d1: vec![0.0; input_dim],
            d2: vec![0.0; output_dim],
            omega: HashMap::new(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Number of pairs added so far.
    pub fn count(&self) -> usize {
        self.count
    }

    fn check(&self, index: usize, phi: &SparseVec, psi: &SparseVec) -> Result<()> {
        if phi.dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                index,
                expected: self.input_dim,
                found: phi.dim(),
            });
        }
        if psi.dim() != self.output_dim {
            return Err(Error::DimensionMismatch {
                index,
                expected: self.output_dim,
                found: psi.dim(),
            });
        }
        Ok(())
    }

    fn add_cross(&mut self, phi: &SparseVec, psi: &SparseVec) {
        for (i, x) in phi.iter() {
            for (j, y) in psi.iter() {
                *self.omega.entry((i, j)).or_insert(0.0) += x * y;
            }
        }
        self.count += 1;
    }

    /// Adds one pair; `index` is only used for error reporting.
    pub fn add(&mut self, index: usize, phi: &SparseVec, psi: &SparseVec) -> Result<()> {
        self.check(index, phi, psi)?;
        for (i, x) in phi.iter() {
            self.d1[i] += x * x;
        }
        for (j, y) in psi.iter() {
            self.d2[j] += y * y;
        }
        self.add_cross(phi, psi);
        Ok(())
    }

    pub fn merge(mut self, other: SecondMoments) -> Result<Self> {
        if (self.input_dim, self.output_dim) != (other.input_dim, other.output_dim) {
            return Err(Error::InvalidInput(format!(
                "cannot merge {}x{} moments into {}x{}",
                other.input_dim, other.output_dim, self.input_dim, self.output_dim
            )));
        }
        for (a, b) in self.d1.iter_mut().zip(&other.d1) {
            *a += b;
        }
        for (a, b) in self.d2.iter_mut().zip(&other.d2) {
            *a += b;
        }
        for (key, v) in other.omega {
            *self.omega.entry(key).or_insert(0.0) += v;
        }
        self.count += other.count;
        Ok(self)
    }

    pub fn d1(&self) -> DiagMatrix {
        DiagMatrix::from_raw(self.d1.clone())
    }

    pub fn d2(&self) -> DiagMatrix {
        DiagMatrix::from_raw(self.d2.clone())
    }

    pub fn cross_covariance(&self) -> SparseMatrix {
        let mut entries: Vec<(usize, usize, f64)> = self
            .omega
            .iter()
            .filter(|(_, &v)| v != 0.0)
            .map(|(&(i, j), &v)| (i, j, v))
            .collect();
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        SparseMatrix::from_sorted_unchecked(self.input_dim, self.output_dim, entries)
    }
}
