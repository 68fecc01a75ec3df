//! Diagonal-normalized CCA: training, projection and similarity.
//!
//! Training accumulates `D1 = diag(Σ φφᵀ)`, `D2 = diag(Σ ψψᵀ)` and
//! `Ω = Σ φψᵀ`, takes the rank-`m` thin SVD `D1^{-1/2} Ω D2^{-1/2} ≈ U Σ Vᵀ`
//! and keeps the maps `A = D1^{-1/2} U` and `B = D2^{-1/2} V`. Inputs and
//! outputs are compared through `cosine(Aᵀφ(x), Bᵀψ(y))`.

mod io;

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::linalg::{scale_by_diag, thin_svd_with, SecondMoments, SparseVec, SvdOptions};

pub use io::{read_model, write_model, MODEL_FORMAT_VERSION};

/// A point in the shared `m`-dimensional space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVec(pub Vec<f64>);

impl LatentVec {
    pub fn zeros(m: usize) -> Self {
        LatentVec(vec![0.0; m])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &LatentVec) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

impl Deref for LatentVec {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A trained projection pair.
///
/// Only rows of `A` and `B` for retained coordinates (features with a nonzero
/// second moment in training) are stored; other features project to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CcaModel {
    m: usize,
    input_dim: usize,
    output_dim: usize,
    retained_input: Vec<usize>,
    retained_output: Vec<usize>,
    input_map: Vec<f64>,
    output_map: Vec<f64>,
    sigma: Vec<f64>,
    output_vocab_digest: Option<String>,
}

impl CcaModel {
    /// Assembles a model from explicit maps. `input_map` is
    /// `retained_input.len() × m` row-major, likewise `output_map`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        m: usize,
        input_dim: usize,
        output_dim: usize,
        retained_input: Vec<usize>,
        retained_output: Vec<usize>,
        input_map: Vec<f64>,
        output_map: Vec<f64>,
        sigma: Vec<f64>,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("m must be positive".into()));
        }
        if sigma.len() != m {
            return Err(Error::InvalidInput(format!(
                "expected {m} singular values, got {}",
                sigma.len()
            )));
        }
        check_index_map(&retained_input, input_dim, "input")?;
        check_index_map(&retained_output, output_dim, "output")?;
        if input_map.len() != retained_input.len() * m
            || output_map.len() != retained_output.len() * m
        {
            return Err(Error::InvalidInput(
                "projection map shape does not match retained dims".into(),
            ));
        }
        if !input_map
            .iter()
            .chain(&output_map)
            .chain(&sigma)
            .all(|x| x.is_finite())
        {
            return Err(Error::InvalidInput(
                "model contains non-finite values".into(),
            ));
        }
        if sigma.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput(
                "singular values must be non-increasing".into(),
            ));
        }
        Ok(CcaModel {
            m,
            input_dim,
            output_dim,
            retained_input,
            retained_output,
            input_map,
            output_map,
            sigma,
            output_vocab_digest: None,
        })
    }

    /// Tags the model with a digest of the phrase vocabulary ψ was built from.
    pub fn with_output_vocab_digest(mut self, digest: impl Into<String>) -> Self {
        self.output_vocab_digest = Some(digest.into());
        self
    }

    pub fn output_vocab_digest(&self) -> Option<&str> {
        self.output_vocab_digest.as_deref()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn retained_input(&self) -> &[usize] {
        &self.retained_input
    }

    pub fn retained_output(&self) -> &[usize] {
        &self.retained_output
    }

    pub fn input_map(&self) -> &[f64] {
        &self.input_map
    }

    pub fn output_map(&self) -> &[f64] {
        &self.output_map
    }

    /// Row of `A` for an original input feature, if retained.
    pub fn input_row(&self, feature: usize) -> Option<&[f64]> {
        let r = self.retained_input.binary_search(&feature).ok()?;
        Some(&self.input_map[r * self.m..(r + 1) * self.m])
    }

    /// Row of `B` for an original output feature, if retained.
    pub fn output_row(&self, feature: usize) -> Option<&[f64]> {
        let r = self.retained_output.binary_search(&feature).ok()?;
        Some(&self.output_map[r * self.m..(r + 1) * self.m])
    }

    /// `u(x) = Aᵀ φ(x)`.
    pub fn project_input(&self, phi: &SparseVec) -> Result<LatentVec> {
        if phi.dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                index: 0,
                expected: self.input_dim,
                found: phi.dim(),
            });
        }
        Ok(self.project(phi.iter(), true))
    }

    /// `v(y) = Bᵀ ψ(y)`.
    pub fn project_output(&self, psi: &SparseVec) -> Result<LatentVec> {
        if psi.dim() != self.output_dim {
            return Err(Error::DimensionMismatch {
                index: 0,
                expected: self.output_dim,
                found: psi.dim(),
            });
        }
        Ok(self.project(psi.iter(), false))
    }

    /// Projects a binary output vector given by its active feature indices.
    /// Indices outside the output space are ignored.
    pub(crate) fn project_output_indicators(
        &self,
        active: impl IntoIterator<Item = usize>,
    ) -> LatentVec {
        self.project(active.into_iter().map(|i| (i, 1.0)), false)
    }

    fn project(&self, entries: impl Iterator<Item = (usize, f64)>, input: bool) -> LatentVec {
        let mut z = vec![0.0; self.m];
        for (i, x) in entries {
            let row = if input {
                self.input_row(i)
            } else {
                self.output_row(i)
            };
            if let Some(row) = row {
                for (acc, a) in z.iter_mut().zip(row) {
                    *acc += x * a;
                }
            }
        }
        LatentVec(z)
    }
}

fn check_index_map(map: &[usize], dim: usize, which: &str) -> Result<()> {
    if map.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(format!(
            "{which} index map must be strictly increasing"
        )));
    }
    if map.last().is_some_and(|&i| i >= dim) {
        return Err(Error::InvalidInput(format!(
            "{which} index map exceeds dim {dim}"
        )));
    }
    Ok(())
}

/// Trains a model from `(φ(x), ψ(y))` pairs.
pub fn train(pairs: &[(SparseVec, SparseVec)], m: usize, seed: u64) -> Result<CcaModel> {
    train_with(pairs, m, seed, &SvdOptions::default())
}

pub fn train_with(
    pairs: &[(SparseVec, SparseVec)],
    m: usize,
    seed: u64,
    opts: &SvdOptions,
) -> Result<CcaModel> {
    let (phi0, psi0) = pairs
        .first()
        .ok_or_else(|| Error::Empty("training needs at least one pair".into()))?;
    let mut moments = SecondMoments::new(phi0.dim(), psi0.dim());
    for (k, (phi, psi)) in pairs.iter().enumerate() {
        moments.add(k, phi, psi)?;
    }
    train_from_moments(&moments, m, seed, opts)
}

/// Finishes training from already accumulated (possibly merged) moments.
pub fn train_from_moments(
    moments: &SecondMoments,
    m: usize,
    seed: u64,
    opts: &SvdOptions,
) -> Result<CcaModel> {
    if moments.count() == 0 {
        return Err(Error::Empty("training needs at least one pair".into()));
    }
    let d1 = moments.d1();
    let d2 = moments.d2();
    let scaled = scale_by_diag(&moments.cross_covariance(), &d1, &d2)?;
    let retained_input = scaled.retained_rows.len();
    let retained_output = scaled.retained_cols.len();
    if m == 0 || m > retained_input.min(retained_output) {
        return Err(Error::RankTooLarge {
            m,
            retained_input,
            retained_output,
        });
    }
    log::info!(
        "training CCA: {} pairs, retained dims {} x {} (of {} x {}), {} nonzeros, m = {}",
        moments.count(),
        retained_input,
        retained_output,
        moments.input_dim(),
        moments.output_dim(),
        scaled.matrix.nnz(),
        m
    );
    let svd = thin_svd_with(&scaled.matrix, m, seed, opts)?;

    let mut input_map = Vec::with_capacity(retained_input * m);
    for (r, &i) in scaled.retained_rows.iter().enumerate() {
        let s = d1.diag()[i].sqrt();
        input_map.extend((0..m).map(|c| svd.u[(r, c)] / s));
    }
    let mut output_map = Vec::with_capacity(retained_output * m);
    for (r, &j) in scaled.retained_cols.iter().enumerate() {
        let s = d2.diag()[j].sqrt();
        output_map.extend((0..m).map(|c| svd.v[(r, c)] / s));
    }

    CcaModel::from_parts(
        m,
        moments.input_dim(),
        moments.output_dim(),
        scaled.retained_rows,
        scaled.retained_cols,
        input_map,
        output_map,
        svd.sigma,
    )
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(z: &[f64], z2: &[f64]) -> f64 {
    let (mut dot, mut n1, mut n2) = (0.0, 0.0, 0.0);
    for (a, b) in z.iter().zip(z2) {
        dot += a * b;
        n1 += a * a;
        n2 += b * b;
    }
    if n1 == 0.0 || n2 == 0.0 {
        return 0.0;
    }
    (dot / (n1.sqrt() * n2.sqrt())).clamp(-1.0, 1.0)
}

/// Diagnostic objective `Σ_{i,j} d_ij − n Σ_i d_ii²` with
/// `d_ij = sqrt(½ ‖u(x_i) − v(y_j)‖²)`.
pub fn cca_objective(model: &CcaModel, pairs: &[(SparseVec, SparseVec)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("objective needs at least one pair".into()));
    }
    let us = pairs
        .iter()
        .map(|(phi, _)| model.project_input(phi))
        .collect::<Result<Vec<_>>>()?;
    let vs = pairs
        .iter()
        .map(|(_, psi)| model.project_output(psi))
        .collect::<Result<Vec<_>>>()?;
    let n = pairs.len() as f64;
    let dist = |u: &LatentVec, v: &LatentVec| {
        (0.5 * u
            .iter()
            .zip(v.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>())
        .sqrt()
    };
    let mut total = 0.0;
    let mut matched = 0.0;
    for (i, u) in us.iter().enumerate() {
        for (j, v) in vs.iter().enumerate() {
            let d = dist(u, v);
            total += d;
            if i == j {
                matched += d * d;
            }
        }
    }
    Ok(total - n * matched)
}
