//! Test-only oracles. Nothing here calls into the library's numerical code.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use cca_infer::linalg::SparseVec;
use cca_infer::phrase::{Caption, ContextTable};

pub type Dense = Vec<Vec<f64>>;

pub fn toy_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/toy")
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Dense {
    (0..rows)
        .map(|_| (0..cols).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

pub fn transpose(a: &Dense) -> Dense {
    if a.is_empty() {
        return Vec::new();
    }
    (0..a[0].len())
        .map(|j| a.iter().map(|row| row[j]).collect())
        .collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn frobenius(a: &Dense) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// Full SVD by one-sided (Hestenes) Jacobi rotations.
/// Returns `(sigma descending, U columns, V columns)` with `min(rows, cols)` triplets.
pub fn jacobi_svd(a: &Dense) -> (Vec<f64>, Dense, Dense) {
    let rows = a.len();
    let cols = a[0].len();
    if rows < cols {
        let (s, u, v) = jacobi_svd(&transpose(a));
        return (s, v, u);
    }
    // Work on columns: w[j] is column j of A, vcols[j] column j of V.
    let mut w: Dense = transpose(a);
    let mut vcols: Dense = (0..cols)
        .map(|j| (0..cols).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = w[p].iter().map(|x| x * x).sum();
                let beta: f64 = w[q].iter().map(|x| x * x).sum();
                let gamma: f64 = w[p].iter().zip(&w[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..rows {
                    let (x, y) = (w[p][k], w[q][k]);
                    w[p][k] = c * x - s * y;
                    w[q][k] = s * x + c * y;
                }
                for k in 0..cols {
                    let (x, y) = (vcols[p][k], vcols[q][k]);
                    vcols[p][k] = c * x - s * y;
                    vcols[q][k] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut triplets: Vec<(f64, Vec<f64>, Vec<f64>)> = w
        .into_iter()
        .zip(vcols)
        .map(|(col, v)| {
            let s = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            let u = if s > 0.0 {
                col.iter().map(|x| x / s).collect()
            } else {
                col
            };
            (s, u, v)
        })
        .collect();
    triplets.sort_by(|a, b| b.0.total_cmp(&a.0));
    let sigma = triplets.iter().map(|t| t.0).collect();
    let u = triplets.iter().map(|t| t.1.clone()).collect();
    let v = triplets.into_iter().map(|t| t.2).collect();
    (sigma, u, v)
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn inverse(a: &Dense) -> Dense {
    let n = a.len();
    let mut m: Dense = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        assert!(p.abs() > 1e-300, "singular matrix");
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[col][k];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn centered_cross(a: &Dense, b: &Dense) -> Dense {
    let n = a.len() as f64;
    let da = a[0].len();
    let db = b[0].len();
    let ma: Vec<f64> = (0..da)
        .map(|j| a.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let mb: Vec<f64> = (0..db)
        .map(|j| b.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let mut c = vec![vec![0.0; db]; da];
    for (ra, rb) in a.iter().zip(b) {
        for i in 0..da {
            for j in 0..db {
                c[i][j] += (ra[i] - ma[i]) * (rb[j] - mb[j]);
            }
        }
    }
    c
}

/// Leading sample canonical correlation with full covariance inverses: the
/// square root of the top eigenvalue of `Cxx⁻¹ Cxy Cyy⁻¹ Cyx`, by power iteration.
pub fn canonical_correlation(x: &Dense, y: &Dense) -> f64 {
    let cxx = centered_cross(x, x);
    let cyy = centered_cross(y, y);
    let cxy = centered_cross(x, y);
    let m = matmul(
        &matmul(&inverse(&cxx), &cxy),
        &matmul(&inverse(&cyy), &transpose(&cxy)),
    );
    let mut v = vec![1.0; m.len()];
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w: Vec<f64> = m
            .iter()
            .map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let next: Vec<f64> = w.iter().map(|x| x / norm).collect();
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        lambda = norm;
        if delta < 1e-14 {
            break;
        }
    }
    lambda.sqrt()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Probability of `segment` between `left` and `right`, from raw table counts.
fn q_prob(q: &ContextTable, left: &str, right: &str, segment: &[String]) -> f64 {
    q.get(left, right)
        .and_then(|e| {
            e.phrases()
                .iter()
                .find(|pc| pc.phrase.tokens() == segment)
                .map(|pc| pc.count as f64 / e.total() as f64)
        })
        .unwrap_or(0.0)
}

fn word(tokens: &[String], pos: usize) -> String {
    match pos {
        0 => "<begin>".to_string(),
        p if p > tokens.len() => "<end>".to_string(),
        p => tokens[p - 1].clone(),
    }
}

/// Every caption reachable from `init` by splice moves whose reverse move has
/// positive probability (so the move can be accepted) and whose result is at
/// most `max_len` words.
pub fn enumerate_space(init: &Caption, q: &ContextTable, max_len: usize) -> BTreeSet<Vec<String>> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(init.tokens().to_vec());
    queue.push_back(init.tokens().to_vec());
    while let Some(y) = queue.pop_front() {
        let n = y.len();
        for i in 1..=n {
            for j in i + 1..=n {
                let left = word(&y, i - 1);
                let right = word(&y, j + 1);
                let Some(entry) = q.get(&left, &right) else {
                    continue;
                };
                let old = &y[i - 1..j];
                for pc in entry.phrases() {
                    let mut next = y[..i - 1].to_vec();
                    next.extend(pc.phrase.tokens().iter().cloned());
                    next.extend(y[j..].iter().cloned());
                    if next.len() > max_len || q_prob(q, &left, &right, old) == 0.0 {
                        continue;
                    }
                    if seen.insert(next.clone()) {
                        queue.push_back(next);
                    }
                }
            }
        }
    }
    seen
}

/// Normalized `exp(score / t)` over the given captions.
pub fn boltzmann(scores: &BTreeMap<Vec<String>, f64>, t: f64) -> BTreeMap<Vec<String>, f64> {
    let max = scores.values().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.values().map(|s| ((s - max) / t).exp()).sum();
    scores
        .iter()
        .map(|(k, s)| (k.clone(), ((s - max) / t).exp() / z))
        .collect()
}

pub fn random_sparse_entries(rng: &mut ChaCha8Rng, dim: usize, density: f64) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for i in 0..dim {
        if rng.random::<f64>() < density {
            out.push((i, rng.random_range(-2.0..2.0)));
        }
    }
    out
}

/// A trained model, inventory and context table over a small caption corpus.
pub struct World {
    pub model: cca_infer::cca::CcaModel,
    pub inventory: cca_infer::phrase::PhraseInventory,
    pub q: ContextTable,
    pub corpus: Vec<Caption>,
    /// One-hot scene features, indexed like the `scenes` argument of [`World::build`].
    pub scenes: Vec<SparseVec>,
}

impl World {
    /// `captions[k]` lists the captions of scene `k`; scene `k` has one-hot
    /// features at index `k`.
    pub fn build(captions: &[&[&str]], max_phrase_len: usize, m: usize) -> World {
        let d = captions.len();
        let scenes: Vec<SparseVec> = (0..d).map(|k| SparseVec::binary(d, [k]).unwrap()).collect();
        let corpus: Vec<Caption> = captions
            .iter()
            .flat_map(|caps| caps.iter().map(|c| Caption::parse(c).unwrap()))
            .collect();
        let inventory = cca_infer::phrase::extract_phrases(&corpus, max_phrase_len).unwrap();
        let q = cca_infer::phrase::estimate_context_table(&corpus, &inventory).unwrap();
        let mut pairs = Vec::new();
        for (k, caps) in captions.iter().enumerate() {
            for c in caps.iter() {
                let psi = cca_infer::ingest::text_features(&Caption::parse(c).unwrap(), &inventory);
                pairs.push((scenes[k].clone(), psi));
            }
        }
        let model = cca_infer::cca::train(&pairs, m, 0).unwrap();
        World {
            model,
            inventory,
            q,
            corpus,
            scenes,
        }
    }

    /// Exact `ρ + η|y|` for every caption in `space`, computed from the
    /// model's stored maps with a brute-force phrase matcher.
    pub fn scores(
        &self,
        scene: usize,
        space: &BTreeSet<Vec<String>>,
        eta: f64,
    ) -> BTreeMap<Vec<String>, f64> {
        let m = self.model.m();
        let k = self.scenes[scene].indices()[0];
        let u = self
            .model
            .input_row(k)
            .map(|r| r.to_vec())
            .unwrap_or_else(|| vec![0.0; m]);
        space
            .iter()
            .map(|y| {
                let mut v = vec![0.0; m];
                for (idx, p) in self.inventory.phrases().iter().enumerate() {
                    let p = p.tokens();
                    let fires = y.len() >= p.len()
                        && (0..=y.len() - p.len()).any(|s| &y[s..s + p.len()] == p);
                    if let (true, Some(row)) = (fires, self.model.output_row(idx)) {
                        for c in 0..m {
                            v[c] += row[c];
                        }
                    }
                }
                let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
                let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                let rho = if nu == 0.0 || nv == 0.0 {
                    0.0
                } else {
                    dot / (nu * nv)
                };
                (y.clone(), rho + eta * y.len() as f64)
            })
            .collect()
    }
}

/// Total variation distance between an empirical sample and a distribution.
pub fn total_variation(samples: &[Caption], target: &BTreeMap<Vec<String>, f64>) -> f64 {
    let mut counts: BTreeMap<Vec<String>, f64> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.tokens().to_vec()).or_insert(0.0) += 1.0;
    }
    let n = samples.len() as f64;
    let mut keys: BTreeSet<&Vec<String>> = target.keys().collect();
    keys.extend(counts.keys());
    0.5 * keys
        .into_iter()
        .map(|k| {
            (counts.get(k).copied().unwrap_or(0.0) / n - target.get(k).copied().unwrap_or(0.0))
                .abs()
        })
        .sum::<f64>()
}

/// Ten distinct three-word captions over three scenes. Every splice move keeps
/// the length at three, so detailed balance holds exactly.
pub const TEN_CAPTIONS: [&[&str]; 3] = [
    &["mike kicks ball", "jenny kicks ball", "mike throws ball"],
    &[
        "jenny throws frisbee",
        "mike throws frisbee",
        "tom catches frisbee",
    ],
    &[
        "tom flies kite",
        "jenny flies kite",
        "mike holds kite",
        "tom holds ball",
    ],
];

/// Five scenes of `NAME VERB the OBJECT` captions; splicing recombines names,
/// verbs and objects into 85 reachable captions.
pub const SCENE_CAPTIONS: [&[&str]; 5] = [
    &[
        "mike kicks the ball",
        "jenny throws the ball",
        "tom kicks the ball",
        "mike holds the ball",
    ],
    &[
        "jenny flies the kite",
        "tom holds the kite",
        "mike flies the kite",
    ],
    &[
        "tom pets the dog",
        "jenny walks the dog",
        "mike pets the dog",
        "jenny feeds the dog",
    ],
    &[
        "mike eats the pie",
        "jenny eats the pie",
        "tom wants the pie",
    ],
    &[
        "jenny wears the hat",
        "tom wears the hat",
        "mike wants the hat",
    ],
];

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Independent zero-mean coordinates with different scales; the first output
/// coordinate is correlated with the first input coordinate at `r`.
pub fn planted(rng: &mut ChaCha8Rng, n: usize, r: f64) -> (Dense, Dense) {
    let sx = [1.0, 2.0, 0.5, 1.5, 3.0];
    let sy = [2.0, 1.0, 0.7, 1.2];
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let z: Vec<f64> = (0..5).map(|_| normal(rng)).collect();
        let x: Vec<f64> = z.iter().zip(sx).map(|(z, s)| z * s).collect();
        let mut y: Vec<f64> = (0..4).map(|k| normal(rng) * sy[k]).collect();
        y[0] = sy[0] * (r * z[0] + (1.0 - r * r).sqrt() * normal(rng));
        xs.push(x);
        ys.push(y);
    }
    (xs, ys)
}

/// Row-aligned pairs as sparse vectors.
pub fn to_pairs(xs: &Dense, ys: &Dense) -> Vec<(SparseVec, SparseVec)> {
    xs.iter()
        .zip(ys)
        .map(|(x, y)| {
            (
                SparseVec::from_dense(x).unwrap(),
                SparseVec::from_dense(y).unwrap(),
            )
        })
        .collect()
}

/// One-hot (mutually exclusive) features with varying scale, so that `Ω` is
/// diagonal after normalization.
pub fn identical_views(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<(SparseVec, SparseVec)> {
    (0..n)
        .map(|k| {
            let i = if k < d { k } else { rng.random_range(0..d) };
            let phi = SparseVec::new(d, vec![(i, rng.random_range(0.5..3.0))]).unwrap();
            (phi.clone(), phi)
        })
        .collect()
}
