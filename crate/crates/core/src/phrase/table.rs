//! The context table `Q(p | left, right)` estimated by relative frequency.
//!
//! File format, one triple per line, sorted by context then phrase:
//!
//! ```text
//! left \t phrase \t right \t count \t prob
//! ```
//!
//! Boundary contexts are spelled `<begin>` and `<end>`. Probabilities are
//! written in shortest round-trip form and re-validated against the counts on load.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use super::{tokenize, Caption, Phrase, PhraseInventory, BEGIN, END};
use crate::error::{Error, Result};

const PROB_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PhraseCount {
    pub phrase: Phrase,
    pub count: u64,
    pub prob: f64,
}

/// Distribution over phrases for one `(left, right)` context, sorted by phrase.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextEntry {
    phrases: Vec<PhraseCount>,
    total: u64,
}

impl ContextEntry {
    fn from_counts(mut counts: Vec<(Phrase, u64)>) -> Self {
        counts.sort_by(|a, b| a.0.cmp(&b.0));
        let total: u64 = counts.iter().map(|c| c.1).sum();
        let phrases = counts
            .into_iter()
            .map(|(phrase, count)| PhraseCount {
                phrase,
                count,
                prob: count as f64 / total as f64,
            })
            .collect();
        ContextEntry { phrases, total }
    }

    pub fn phrases(&self) -> &[PhraseCount] {
        &self.phrases
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn find(&self, tokens: &[String]) -> Option<&PhraseCount> {
        self.phrases
            .binary_search_by(|pc| pc.phrase.tokens().cmp(tokens))
            .ok()
            .map(|k| &self.phrases[k])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContextTable {
    contexts: BTreeMap<(String, String), ContextEntry>,
}

impl ContextTable {
    pub fn get(&self, left: &str, right: &str) -> Option<&ContextEntry> {
        self.contexts.get(&(left.to_string(), right.to_string()))
    }

    pub fn contexts(&self) -> impl Iterator<Item = (&(String, String), &ContextEntry)> {
        self.contexts.iter()
    }

    /// Number of distinct `(left, right)` contexts.
    pub fn total_contexts(&self) -> usize {
        self.contexts.len()
    }

    /// Number of `(left, phrase, right)` triples.
    pub fn domain_size(&self) -> usize {
        self.contexts.values().map(|e| e.phrases.len()).sum()
    }

    /// Every phrase appearing under some context.
    pub fn phrase_inventory(&self) -> PhraseInventory {
        PhraseInventory::new(
            self.contexts
                .values()
                .flat_map(|e| e.phrases.iter().map(|pc| pc.phrase.clone())),
        )
    }

    pub fn from_counts(counts: ContextCounts, inventory: &PhraseInventory) -> Self {
        let mut grouped: BTreeMap<(String, String), Vec<(Phrase, u64)>> = BTreeMap::new();
        for ((left, right, k), count) in counts.counts {
            let phrase = inventory
                .get(k)
                .expect("count refers to inventory phrase")
                .clone();
            grouped
                .entry((left, right))
                .or_default()
                .push((phrase, count));
        }
        ContextTable {
            contexts: grouped
                .into_iter()
                .map(|(ctx, counts)| (ctx, ContextEntry::from_counts(counts)))
                .collect(),
        }
    }
}

/// Mergeable raw counts keyed by `(left, right, phrase index)`.
#[derive(Debug, Clone, Default)]
pub struct ContextCounts {
    counts: HashMap<(String, String, usize), u64>,
}

impl ContextCounts {
    /// Counts every occurrence of an inventory phrase in `caption`, including
    /// overlapping ones, under its immediate neighbours.
    pub fn add_caption(&mut self, caption: &Caption, inventory: &PhraseInventory) {
        let toks = caption.tokens();
        for start in 0..toks.len() {
            let longest = inventory.max_len().min(toks.len() - start);
            for len in 1..=longest {
                if let Some(k) = inventory.index_of(&toks[start..start + len]) {
                    // 1-based span [start+1, start+len]
                    let left = caption.word_at(start).to_string();
                    let right = caption.word_at(start + len + 1).to_string();
                    *self.counts.entry((left, right, k)).or_insert(0) += 1;
                }
            }
        }
    }

    pub fn merge(mut self, other: ContextCounts) -> Self {
        for (key, c) in other.counts {
            *self.counts.entry(key).or_insert(0) += c;
        }
        self
    }
}

pub fn estimate_context_table(
    corpus: &[Caption],
    inventory: &PhraseInventory,
) -> Result<ContextTable> {
    if corpus.is_empty() {
        return Err(Error::Empty("context table needs a nonempty corpus".into()));
    }
    let counts = corpus
        .par_iter()
        .fold(ContextCounts::default, |mut acc, c| {
            acc.add_caption(c, inventory);
            acc
        })
        .reduce(ContextCounts::default, ContextCounts::merge);
    Ok(ContextTable::from_counts(counts, inventory))
}

/// Draws a phrase from `Q(· | left, right)`; `None` for an unseen context.
pub fn sample_phrase<'a, R: Rng + ?Sized>(
    q: &'a ContextTable,
    left: &str,
    right: &str,
    rng: &mut R,
) -> Option<&'a PhraseCount> {
    let entry = q.get(left, right)?;
    let mut draw = rng.random_range(0..entry.total);
    for pc in &entry.phrases {
        if draw < pc.count {
            return Some(pc);
        }
        draw -= pc.count;
    }
    unreachable!("draw below total always lands on a phrase")
}

/// Stored `Q(segment | left, right)`, or 0 when the context or phrase is absent.
pub fn context_prob(q: &ContextTable, left: &str, right: &str, segment: &[String]) -> f64 {
    q.get(left, right)
        .and_then(|e| e.find(segment))
        .map_or(0.0, |pc| pc.prob)
}

pub fn write_context_table(q: &ContextTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for ((left, right), entry) in &q.contexts {
        for pc in &entry.phrases {
            writeln!(
                out,
                "{left}\t{}\t{right}\t{}\t{}",
                pc.phrase, pc.count, pc.prob
            )
            .unwrap();
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parsed rows of one context: phrase, count, stored probability, line number.
type ContextRows = Vec<(Phrase, u64, f64, usize)>;

pub fn read_context_table(path: impl AsRef<Path>) -> Result<ContextTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut grouped: BTreeMap<(String, String), ContextRows> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 5 tab-separated fields, found {}", fields.len()),
            ));
        }
        let left = fields[0];
        let right = fields[2];
        if left.is_empty() || left == END || left.contains(' ') {
            return Err(Error::parse(
                path,
                line_no,
                format!("bad left context `{left}`"),
            ));
        }
        if right.is_empty() || right == BEGIN || right.contains(' ') {
            return Err(Error::parse(
                path,
                line_no,
                format!("bad right context `{right}`"),
            ));
        }
        let phrase = Phrase::new(tokenize(fields[1]))
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        let count: u64 = fields[3]
            .parse()
            .ok()
            .filter(|&c| c > 0)
            .ok_or_else(|| Error::parse(path, line_no, "count must be a positive integer"))?;
        let prob: f64 = fields[4]
            .parse()
            .ok()
            .filter(|p: &f64| p.is_finite() && *p > 0.0 && *p <= 1.0)
            .ok_or_else(|| Error::parse(path, line_no, "prob must lie in (0, 1]"))?;
        grouped
            .entry((left.to_string(), right.to_string()))
            .or_default()
            .push((phrase, count, prob, line_no));
    }

    let mut contexts = BTreeMap::new();
    for (ctx, rows) in grouped {
        let total: u64 = rows.iter().map(|r| r.1).sum();
        for (phrase, count, prob, line_no) in &rows {
            let expected = *count as f64 / total as f64;
            if (prob - expected).abs() > PROB_TOLERANCE {
                return Err(Error::parse(
                    path,
                    *line_no,
                    format!(
                        "prob {prob} for `{phrase}` disagrees with count ratio {count}/{total}"
                    ),
                ));
            }
        }
        let mut counts: Vec<(Phrase, u64)> = rows.into_iter().map(|r| (r.0, r.1)).collect();
        counts.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = counts.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::parse(
                path,
                0,
                format!(
                    "duplicate phrase `{}` under context ({}, {})",
                    w[0].0, ctx.0, ctx.1
                ),
            ));
        }
        contexts.insert(ctx, ContextEntry::from_counts(counts));
    }
    Ok(ContextTable { contexts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn caps(lines: &[&str]) -> Vec<Caption> {
        lines.iter().map(|l| Caption::parse(l).unwrap()).collect()
    }

    fn inv(phrases: &[&str]) -> PhraseInventory {
        PhraseInventory::new(phrases.iter().map(|p| Phrase::parse(p).unwrap()))
    }

    fn words(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn symmetric_toy_counts() {
        let q = estimate_context_table(&caps(&["a b c", "a d c"]), &inv(&["b", "d"])).unwrap();
        assert_eq!(context_prob(&q, "a", "c", &words("b")), 0.5);
        assert_eq!(context_prob(&q, "a", "c", &words("d")), 0.5);
        assert_eq!(q.domain_size(), 2);
        assert_eq!(q.total_contexts(), 1);
    }

    #[test]
    fn boundary_markers_and_overlaps_are_counted() {
        let q = estimate_context_table(&caps(&["x x x"]), &inv(&["x", "x x"])).unwrap();
        assert_eq!(
            q.get(BEGIN, "x").unwrap().find(&words("x")).unwrap().count,
            1
        );
        assert_eq!(q.get("x", "x").unwrap().find(&words("x")).unwrap().count, 1);
        assert_eq!(q.get("x", END).unwrap().find(&words("x")).unwrap().count, 1);
        assert_eq!(
            q.get(BEGIN, "x")
                .unwrap()
                .find(&words("x x"))
                .unwrap()
                .count,
            1
        );
        assert_eq!(
            q.get("x", END).unwrap().find(&words("x x")).unwrap().count,
            1
        );
        assert_eq!(context_prob(&q, BEGIN, "x", &words("x")), 0.5);
    }

    #[test]
    fn absent_entries_have_zero_probability() {
        let q = estimate_context_table(&caps(&["a b c"]), &inv(&["b"])).unwrap();
        assert_eq!(context_prob(&q, "a", "c", &words("z")), 0.0);
        assert_eq!(context_prob(&q, "q", "c", &words("b")), 0.0);
        // multi-word segments must match a single phrase
        assert_eq!(context_prob(&q, "a", END, &words("b c")), 0.0);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(estimate_context_table(&[], &inv(&["a"])).is_err());
    }

    #[test]
    fn degenerate_context_always_samples_its_phrase() {
        let q = estimate_context_table(&caps(&["a b c"]), &inv(&["b"])).unwrap();
        let mut rng = seed::rng(1);
        for _ in 0..100 {
            assert_eq!(
                sample_phrase(&q, "a", "c", &mut rng)
                    .unwrap()
                    .phrase
                    .to_string(),
                "b"
            );
        }
        assert!(sample_phrase(&q, "c", "a", &mut rng).is_none());
    }

    #[test]
    fn sampling_frequencies_follow_counts() {
        let q = estimate_context_table(
            &caps(&["a b c", "a b c", "a b c", "a d c"]),
            &inv(&["b", "d"]),
        )
        .unwrap();
        let mut rng = seed::rng(2024);
        let draws = 100_000;
        let hits = (0..draws)
            .filter(|_| {
                sample_phrase(&q, "a", "c", &mut rng)
                    .unwrap()
                    .phrase
                    .to_string()
                    == "b"
            })
            .count();
        let freq = hits as f64 / draws as f64;
        assert!((freq - 0.75).abs() < 0.01, "empirical {freq}");
    }

    #[test]
    fn file_round_trip_and_validation() {
        let q = estimate_context_table(
            &caps(&[
                "mike holds the ball.",
                "jenny holds the ball.",
                "mike kicks the ball.",
            ]),
            &inv(&["mike", "jenny", "holds the", "kicks", "the ball.", "holds"]),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.tsv");
        write_context_table(&q, &path).unwrap();
        assert_eq!(read_context_table(&path).unwrap(), q);

        let text = fs::read_to_string(&path).unwrap();
        let first = text.lines().next().unwrap();
        let fields: Vec<&str> = first.split('\t').collect();
        let tampered = format!(
            "{}\t{}\t{}\t{}\t0.123\n",
            fields[0], fields[1], fields[2], fields[3]
        );
        fs::write(&path, text.replacen(&format!("{first}\n"), &tampered, 1)).unwrap();
        assert!(matches!(
            read_context_table(&path),
            Err(Error::Parse { line: 1, .. })
        ));

        fs::write(&path, "a\tb\tc\t1\n").unwrap();
        assert!(read_context_table(&path).is_err());
        fs::write(&path, "a\tb\tc\t0\t1\n").unwrap();
        assert!(read_context_table(&path).is_err());
    }
}
