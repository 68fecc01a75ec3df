//! Corpus BLEU-4 against multi-reference sets, reference self-BLEU and
//! caption diversity.
//!
//! BLEU is uncased (captions are lowercased at tokenization), unsmoothed,
//! with n-gram counts clipped by the maximum count in any single reference
//! and a brevity penalty against the closest reference length (ties go to the
//! shorter reference).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::phrase::Caption;

pub const MAX_ORDER: usize = 4;

/// scene id → reference captions.
pub type ReferenceSet = BTreeMap<String, Vec<Caption>>;

/// scene id → hypothesis caption.
pub type Hypotheses = BTreeMap<String, Caption>;

#[derive(Debug, Clone, PartialEq)]
pub struct BleuReport {
    /// In `[0, 100]`.
    pub bleu: f64,
    /// Clipped precision per order `1..=4`, in `[0, 1]`.
    pub precisions: [f64; MAX_ORDER],
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: u64,
    pub ref_len: u64,
    pub scenes: usize,
    /// Not computed; kept so reports have a stable schema.
    pub meteor: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    matches: [u64; MAX_ORDER],
    totals: [u64; MAX_ORDER],
    hyp_len: u64,
    ref_len: u64,
}

impl Stats {
    fn merge(mut self, other: Stats) -> Stats {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
        self
    }
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

fn closest_ref_len(hyp_len: usize, refs: &[Caption]) -> usize {
    refs.iter()
        .map(Caption::len)
        .min_by_key(|&r| (r.abs_diff(hyp_len), r))
        .expect("references are nonempty")
}

fn sentence_stats(hyp: &Caption, refs: &[Caption]) -> Stats {
    let mut s = Stats {
        hyp_len: hyp.len() as u64,
        ref_len: closest_ref_len(hyp.len(), refs) as u64,
        ..Stats::default()
    };
    for n in 1..=MAX_ORDER {
        let h = ngrams(hyp.tokens(), n);
        let mut max_ref: HashMap<&[String], u64> = HashMap::new();
        for r in refs {
            for (g, c) in ngrams(r.tokens(), n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        s.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
        s.matches[n - 1] = h
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
    }
    s
}

fn report(stats: Stats, scenes: usize) -> BleuReport {
    let mut precisions = [0.0; MAX_ORDER];
    for (p, (&m, &t)) in precisions
        .iter_mut()
        .zip(stats.matches.iter().zip(&stats.totals))
    {
        if t > 0 {
            *p = m as f64 / t as f64;
        }
    }
    let brevity_penalty = brevity_penalty(stats.hyp_len, stats.ref_len);
    let bleu = if precisions.contains(&0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };
    BleuReport {
        bleu,
        precisions,
        matches: stats.matches,
        totals: stats.totals,
        brevity_penalty,
        hyp_len: stats.hyp_len,
        ref_len: stats.ref_len,
        scenes,
        meteor: None,
    }
}

fn brevity_penalty(hyp_len: u64, ref_len: u64) -> f64 {
    if hyp_len == 0 {
        0.0
    } else if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    }
}

/// Corpus BLEU-4 of `hyps` against `refs`. Every hypothesis scene needs at
/// least one reference.
pub fn corpus_bleu(hyps: &Hypotheses, refs: &ReferenceSet) -> Result<BleuReport> {
    let missing: Vec<String> = hyps
        .keys()
        .filter(|id| refs.get(*id).is_none_or(|r| r.is_empty()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingReferences(missing));
    }
    let items: Vec<(&Caption, &[Caption])> = hyps
        .iter()
        .map(|(id, h)| (h, refs[id].as_slice()))
        .collect();
    let stats = items
        .par_iter()
        .map(|(h, r)| sentence_stats(h, r))
        .reduce(Stats::default, Stats::merge);
    Ok(report(stats, hyps.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfBleuReport {
    pub batch_index: usize,
    pub report: BleuReport,
    /// Scenes without a caption at `batch_index` or without any other caption.
    pub skipped: usize,
}

/// The split used by [`reference_self_bleu`]: caption `batch_index` of each
/// scene as hypothesis, its other captions as references.
pub fn self_bleu_split(
    refs: &ReferenceSet,
    batch_index: usize,
) -> (Hypotheses, ReferenceSet, usize) {
    let mut hyps = Hypotheses::new();
    let mut rest = ReferenceSet::new();
    let mut skipped = 0;
    for (id, caps) in refs {
        if caps.len() <= batch_index || caps.len() < 2 {
            skipped += 1;
            continue;
        }
        hyps.insert(id.clone(), caps[batch_index].clone());
        let others = caps
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != batch_index)
            .map(|(_, c)| c.clone())
            .collect();
        rest.insert(id.clone(), others);
    }
    (hyps, rest, skipped)
}

/// BLEU of the `batch_index`-th reference of every scene against the others.
pub fn reference_self_bleu(refs: &ReferenceSet, batch_index: usize) -> SelfBleuReport {
    let (hyps, rest, skipped) = self_bleu_split(refs, batch_index);
    if skipped > 0 {
        log::info!("self-BLEU batch {batch_index}: skipped {skipped} scenes");
    }
    let report = corpus_bleu(&hyps, &rest).expect("split pairs every hypothesis with references");
    SelfBleuReport {
        batch_index,
        report,
        skipped,
    }
}

/// Number of distinct token sequences among the hypotheses.
pub fn unique_caption_count(hyps: &Hypotheses) -> usize {
    hyps.values()
        .map(Caption::tokens)
        .collect::<BTreeSet<_>>()
        .len()
}

/// Per-scene sentence BLEU with add-one smoothing on orders 2..=4, for
/// scatter plots. Corpus scores never use this.
pub fn sentence_bleu_smoothed(hyp: &Caption, refs: &[Caption]) -> f64 {
    if refs.is_empty() {
        return 0.0;
    }
    let s = sentence_stats(hyp, refs);
    if s.matches[0] == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 0..MAX_ORDER {
        let (m, t) = if n == 0 {
            (s.matches[0], s.totals[0])
        } else {
            (s.matches[n] + 1, s.totals[n] + 1)
        };
        log_sum += (m as f64 / t as f64).ln();
    }
    100.0 * brevity_penalty(s.hyp_len, s.ref_len) * (log_sum / MAX_ORDER as f64).exp()
}

/// `(scene_id, sentence BLEU)` rows in scene order.
pub fn per_scene_scores(hyps: &Hypotheses, refs: &ReferenceSet) -> Vec<(String, f64)> {
    hyps.iter()
        .map(|(id, h)| {
            (
                id.clone(),
                sentence_bleu_smoothed(h, refs.get(id).map_or(&[][..], Vec::as_slice)),
            )
        })
        .collect()
}

impl BleuReport {
    pub fn to_text(&self) -> String {
        let p: Vec<String> = self
            .precisions
            .iter()
            .map(|p| format!("{:.1}", 100.0 * p))
            .collect();
        format!(
            "BLEU = {:.2}, {} (BP={:.3}, ratio={:.3}, hyp_len={}, ref_len={}, scenes={})\n",
            self.bleu,
            p.join("/"),
            self.brevity_penalty,
            if self.ref_len == 0 {
                0.0
            } else {
                self.hyp_len as f64 / self.ref_len as f64
            },
            self.hyp_len,
            self.ref_len,
            self.scenes,
        )
    }

    /// `key\tvalue` lines; floats printed round-trip exact.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        writeln!(out, "bleu\t{}", self.bleu).unwrap();
        for n in 0..MAX_ORDER {
            writeln!(out, "precision_{}\t{}", n + 1, self.precisions[n]).unwrap();
            writeln!(out, "matches_{}\t{}", n + 1, self.matches[n]).unwrap();
            writeln!(out, "totals_{}\t{}", n + 1, self.totals[n]).unwrap();
        }
        writeln!(out, "brevity_penalty\t{}", self.brevity_penalty).unwrap();
        writeln!(out, "hyp_len\t{}", self.hyp_len).unwrap();
        writeln!(out, "ref_len\t{}", self.ref_len).unwrap();
        writeln!(out, "scenes\t{}", self.scenes).unwrap();
        match self.meteor {
            Some(m) => writeln!(out, "meteor\t{m}").unwrap(),
            None => writeln!(out, "meteor\tNA").unwrap(),
        }
        out
    }
}

/// Reads `scene_id \t caption [\t extra...]` lines, e.g. decoder output.
pub fn load_hypotheses(path: impl AsRef<Path>) -> Result<Hypotheses> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Hypotheses::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default();
        let caption = fields
            .next()
            .ok_or_else(|| Error::parse(path, n + 1, "expected `scene_id<TAB>caption`"))?;
        let caption =
            Caption::parse(caption).map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
        if id.is_empty() || out.insert(id.to_string(), caption).is_some() {
            return Err(Error::parse(
                path,
                n + 1,
                format!("bad or duplicate scene id `{id}`"),
            ));
        }
    }
    Ok(out)
}

pub fn write_scatter(rows: &[(String, f64)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("scene_id\tbleu\n");
    for (id, s) in rows {
        writeln!(out, "{id}\t{s}").unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
