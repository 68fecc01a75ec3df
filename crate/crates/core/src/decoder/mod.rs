//! Annealed Metropolis-Hastings decoding over phrase-spliced captions.
//!
//! A move picks two distinct word positions `i < j` of the current caption
//! uniformly, reads the words just outside the span (or the boundary markers),
//! draws a phrase from `Q(· | left, right)` and splices it over `i..=j`. The
//! move is accepted with probability `min(1, α₀ α₁)` where
//!
//! * `α₀ = exp((s(y) − s(y′)) / t)`, `s(y) = ρ(u(x), v(y)) + η|y|`
//! * `α₁ = |y|² Q(y′_i..y′_j | ctx) / (|y′|² Q(p | ctx))`
//!
//! and the temperature follows `t_k = T τ^k` while `t_k ≥ t_min`. Every proposed
//! caption, accepted or not, is a candidate for the returned best.

mod batch;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cca::{cosine, CcaModel, LatentVec};
use crate::error::{Error, Result};
use crate::linalg::SparseVec;
use crate::phrase::{
    context_prob, sample_phrase, Caption, ContextTable, Phrase, PhraseInventory, BEGIN, END,
};
use crate::seed;

pub use batch::{decode_batch, initial_caption, BatchItem};

/// How the chain's starting caption is chosen for batch decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// A uniformly drawn caption from the training pool.
    #[default]
    TrainingCaption,
    /// Chain the most frequent phrase/right-word pairs starting from `<begin>`.
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Length bonus weight η.
    pub eta: f64,
    /// Starting temperature T.
    pub start_temp: f64,
    /// Cooling factor τ.
    pub cooling: f64,
    /// The loop runs while `t ≥ min_temp`.
    pub min_temp: f64,
    pub seed: u64,
    /// Proposals producing longer captions are discarded.
    pub max_len: usize,
    /// Floor for the reverse-move probability; 0 rejects irreversible moves.
    pub reverse_epsilon: f64,
    /// Divide the whole score (cosine and length bonus) by `t`. When false only
    /// the cosine is tempered and `η|y|` enters `α₀` untempered.
    pub eta_inside_temperature: bool,
    pub init: InitMode,
    /// Record a per-step trace.
    pub trace: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            eta: 0.05,
            start_temp: 10_000.0,
            cooling: 0.995,
            min_temp: 0.1,
            seed: 0,
            max_len: 50,
            reverse_epsilon: 0.0,
            eta_inside_temperature: true,
            init: InitMode::TrainingCaption,
            trace: false,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return bad("eta must be finite and >= 0");
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return bad("cooling factor tau must lie in (0, 1)");
        }
        if !(self.min_temp.is_finite() && self.min_temp > 0.0) {
            return bad("min temperature must be > 0");
        }
        if !(self.start_temp.is_finite() && self.start_temp > self.min_temp) {
            return bad("start temperature must be finite and greater than the min temperature");
        }
        if self.max_len < 1 {
            return bad("max_len must be at least 1");
        }
        if !(self.reverse_epsilon.is_finite() && self.reverse_epsilon >= 0.0) {
            return bad("reverse_epsilon must be finite and >= 0");
        }
        Ok(())
    }

    /// Temperature at step `k`.
    pub fn temperature(&self, k: usize) -> f64 {
        self.start_temp * self.cooling.powi(k as i32)
    }

    /// Number of annealing steps: the smallest `k` with `T τ^k < t_min`.
    pub fn schedule_len(&self) -> usize {
        let mut k = 0;
        while self.temperature(k) >= self.min_temp {
            k += 1;
        }
        k
    }
}

/// Components of `s(y) = ρ + η|y|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub cosine: f64,
    pub length: usize,
    pub eta: f64,
}

impl Score {
    pub fn total(&self) -> f64 {
        self.cosine + self.eta * self.length as f64
    }
}

/// `ρ(u(x), v(y)) + η|y|` with `v(y)` from an arbitrary feature function.
pub fn score<F>(ux: &LatentVec, model: &CcaModel, y: &Caption, psi: F, eta: f64) -> Result<f64>
where
    F: Fn(&Caption) -> SparseVec,
{
    let vy = model.project_output(&psi(y))?;
    Ok(cosine(ux, &vy) + eta * y.len() as f64)
}

/// Scores captions against one fixed input.
#[derive(Debug, Clone)]
pub struct Scorer<'a> {
    model: &'a CcaModel,
    inventory: &'a PhraseInventory,
    ux: LatentVec,
    eta: f64,
}

impl<'a> Scorer<'a> {
    pub fn new(
        model: &'a CcaModel,
        inventory: &'a PhraseInventory,
        phi: &SparseVec,
        eta: f64,
    ) -> Result<Self> {
        if inventory.len() != model.output_dim() {
            return Err(Error::InvalidInput(format!(
                "phrase inventory has {} phrases but the model's output dim is {}",
                inventory.len(),
                model.output_dim()
            )));
        }
        let ux = model.project_input(phi)?;
        Ok(Scorer {
            model,
            inventory,
            ux,
            eta,
        })
    }

    pub fn input_projection(&self) -> &LatentVec {
        &self.ux
    }

    pub fn score(&self, y: &Caption) -> Score {
        let vy = self
            .model
            .project_output_indicators(self.inventory.matches(y.tokens()));
        Score {
            cosine: cosine(&self.ux, &vy),
            length: y.len(),
            eta: self.eta,
        }
    }
}

/// A candidate move `y′ → y`. Positions are 1-based and inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub i: usize,
    pub j: usize,
    pub phrase: Phrase,
    pub new_caption: Caption,
    pub forward_prob: f64,
    pub reverse_prob: f64,
}

/// Draws one move, or `None` when the caption is shorter than two words, the
/// context is unseen, or the result would exceed `max_len`.
pub fn propose<R: Rng + ?Sized>(
    current: &Caption,
    q: &ContextTable,
    max_len: usize,
    reverse_epsilon: f64,
    rng: &mut R,
) -> Option<Proposal> {
    let len = current.len();
    if len < 2 {
        return None;
    }
    let (i, j) = draw_pair(len, rng);
    let left = current.word_at(i - 1);
    let right = current.word_at(j + 1);
    let drawn = sample_phrase(q, left, right, rng)?;
    let new_len = len - (j - i + 1) + drawn.phrase.len();
    if new_len > max_len {
        return None;
    }
    let replaced = &current.tokens()[i - 1..j];
    let reverse_prob = context_prob(q, left, right, replaced).max(reverse_epsilon);
    Some(Proposal {
        i,
        j,
        phrase: drawn.phrase.clone(),
        new_caption: current.splice(i, j, &drawn.phrase),
        forward_prob: drawn.prob,
        reverse_prob,
    })
}

/// Uniform unordered pair of distinct positions in `1..=len`, returned ordered.
fn draw_pair<R: Rng + ?Sized>(len: usize, rng: &mut R) -> (usize, usize) {
    let a = rng.random_range(0..len);
    let mut b = rng.random_range(0..len - 1);
    if b >= a {
        b += 1;
    }
    (a.min(b) + 1, a.max(b) + 1)
}

/// `min(1, α₀ α₁)` for moving from a caption scored `old` to `proposal`.
pub fn acceptance_ratio(
    proposal: &Proposal,
    old: &Score,
    new: &Score,
    t: f64,
    eta_inside_temperature: bool,
) -> f64 {
    debug_assert!(t > 0.0);
    if proposal.reverse_prob <= 0.0 {
        return 0.0;
    }
    let log_a0 = if eta_inside_temperature {
        (new.total() - old.total()) / t
    } else {
        (new.cosine - old.cosine) / t + new.eta * (new.length as f64 - old.length as f64)
    };
    let new_len = new.length as f64;
    let old_len = old.length as f64;
    let log_a1 = 2.0 * (new_len.ln() - old_len.ln()) + proposal.reverse_prob.ln()
        - proposal.forward_prob.ln();
    let log_alpha = log_a0 + log_a1;
    if log_alpha >= 0.0 {
        1.0
    } else {
        log_alpha.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceStep {
    pub step: usize,
    pub temp: f64,
    /// Score of the chain state after this step.
    pub current_score: f64,
    /// Best score seen so far, including this step's proposal.
    pub best_score: f64,
    pub proposed: bool,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeWarning {
    /// No step produced a valid proposal; the initial caption is returned.
    NoValidProposal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub caption: Caption,
    pub score: Score,
    pub iterations: usize,
    pub proposals: usize,
    pub accepted: usize,
    pub warning: Option<DecodeWarning>,
    pub trace: Vec<TraceStep>,
}

struct Chain<'s, 'a> {
    scorer: &'s Scorer<'a>,
    q: &'s ContextTable,
    config: &'s DecoderConfig,
    current: Caption,
    current_score: Score,
}

struct Step {
    candidate: Option<(Caption, Score)>,
    accepted: bool,
}

impl Chain<'_, '_> {
    fn step<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) -> Step {
        let Some(proposal) = propose(
            &self.current,
            self.q,
            self.config.max_len,
            self.config.reverse_epsilon,
            rng,
        ) else {
            return Step {
                candidate: None,
                accepted: false,
            };
        };
        let new_score = self.scorer.score(&proposal.new_caption);
        let alpha = acceptance_ratio(
            &proposal,
            &self.current_score,
            &new_score,
            t,
            self.config.eta_inside_temperature,
        );
        let accepted = rng.random::<f64>() < alpha;
        if accepted {
            self.current = proposal.new_caption.clone();
            self.current_score = new_score;
        }
        Step {
            candidate: Some((proposal.new_caption, new_score)),
            accepted,
        }
    }
}

/// Runs the annealed chain from `init` and returns the best caption visited.
pub fn decode(
    model: &CcaModel,
    inventory: &PhraseInventory,
    phi: &SparseVec,
    q: &ContextTable,
    init: &Caption,
    config: &DecoderConfig,
) -> Result<DecodeResult> {
    config.validate()?;
    let scorer = Scorer::new(model, inventory, phi, config.eta)?;
    let mut rng = seed::rng(config.seed);
    Ok(run_annealing(&scorer, q, init, config, &mut rng))
}

pub(crate) fn run_annealing(
    scorer: &Scorer<'_>,
    q: &ContextTable,
    init: &Caption,
    config: &DecoderConfig,
    rng: &mut seed::ChainRng,
) -> DecodeResult {
    let init_score = scorer.score(init);
    let mut chain = Chain {
        scorer,
        q,
        config,
        current: init.clone(),
        current_score: init_score,
    };
    let mut best = init.clone();
    let mut best_score = init_score;
    let mut trace = Vec::new();
    let (mut proposals, mut accepted) = (0, 0);

    let mut k = 0;
    loop {
        let t = config.temperature(k);
        if t < config.min_temp {
            break;
        }
        let step = chain.step(t, rng);
        if let Some((candidate, s)) = step.candidate.as_ref() {
            proposals += 1;
            if s.total() >= best_score.total() {
                best = candidate.clone();
                best_score = *s;
            }
        }
        if step.accepted {
            accepted += 1;
        }
        if config.trace {
            trace.push(TraceStep {
                step: k,
                temp: t,
                current_score: chain.current_score.total(),
                best_score: best_score.total(),
                proposed: step.candidate.is_some(),
                accepted: step.accepted,
            });
        }
        k += 1;
    }

    DecodeResult {
        caption: best,
        score: best_score,
        iterations: k,
        proposals,
        accepted,
        warning: (proposals == 0).then_some(DecodeWarning::NoValidProposal),
        trace,
    }
}

/// Runs the chain at a constant temperature and returns the state after each step.
///
/// At `t = 1` the chain targets `P(y | x) ∝ exp(ρ(u(x), v(y)) + η|y|)` over the
/// captions reachable from `init`.
#[allow(clippy::too_many_arguments)]
pub fn sample_fixed_temp(
    model: &CcaModel,
    inventory: &PhraseInventory,
    phi: &SparseVec,
    q: &ContextTable,
    init: &Caption,
    t: f64,
    steps: usize,
    seed: u64,
    config: &DecoderConfig,
) -> Result<Vec<Caption>> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidParameter(
            "temperature must be finite and > 0".into(),
        ));
    }
    let scorer = Scorer::new(model, inventory, phi, config.eta)?;
    let mut rng = seed::rng(seed);
    let mut chain = Chain {
        scorer: &scorer,
        q,
        config,
        current: init.clone(),
        current_score: scorer.score(init),
    };
    let mut visited = Vec::with_capacity(steps);
    for _ in 0..steps {
        chain.step(t, &mut rng);
        visited.push(chain.current.clone());
    }
    Ok(visited)
}

/// Greedy initial caption: from `<begin>`, repeatedly take the most frequent
/// `(phrase, right word)` under the current left word.
pub fn greedy_caption(q: &ContextTable, max_len: usize) -> Option<Caption> {
    let mut tokens: Vec<String> = Vec::new();
    let mut left = BEGIN.to_string();
    while tokens.len() < max_len {
        let best = q
            .contexts()
            .filter(|((l, _), _)| *l == left)
            .flat_map(|((_, r), e)| e.phrases().iter().map(move |pc| (r, pc)))
            .fold(
                None,
                |acc: Option<(&String, &crate::phrase::PhraseCount)>, cur| match acc {
                    Some(a) if a.1.count >= cur.1.count => Some(a),
                    _ => Some(cur),
                },
            );
        let Some((right, pc)) = best else { break };
        tokens.extend(pc.phrase.tokens().iter().cloned());
        if right == END || tokens.len() >= max_len {
            break;
        }
        tokens.push(right.clone());
        left = right.clone();
    }
    tokens.truncate(max_len);
    Caption::new(tokens).ok()
}
