//! Captions, phrase inventories and the context-conditioned phrase table.

mod table;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::seed::sha256_hex;

pub use table::{
    context_prob, estimate_context_table, read_context_table, sample_phrase, write_context_table,
    ContextCounts, ContextEntry, ContextTable, PhraseCount,
};

/// Left-boundary context marker.
pub const BEGIN: &str = "<begin>";
/// Right-boundary context marker.
pub const END: &str = "<end>";

/// Lowercases and splits on whitespace. Punctuation stays attached to words.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn is_marker(token: &str) -> bool {
    token == BEGIN || token == END
}

/// A nonempty token sequence. Boundary markers are implicit and never stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Caption {
    tokens: Vec<String>,
}

impl Caption {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidInput("caption must not be empty".into()));
        }
        if let Some(t) = tokens
            .iter()
            .find(|t| is_marker(t) || t.is_empty() || t.contains(char::is_whitespace))
        {
            return Err(Error::InvalidInput(format!("invalid caption token `{t}`")));
        }
        Ok(Caption { tokens })
    }

    /// Tokenizes raw text; see [`tokenize`].
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(tokenize(text))
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Number of words.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Word at 1-based position `pos`, with `<begin>` at 0 and `<end>` at `len + 1`.
    pub fn word_at(&self, pos: usize) -> &str {
        if pos == 0 {
            BEGIN
        } else if pos > self.tokens.len() {
            END
        } else {
            &self.tokens[pos - 1]
        }
    }

    /// Replaces the words at 1-based positions `i..=j` with `phrase`.
    pub fn splice(&self, i: usize, j: usize, phrase: &Phrase) -> Caption {
        assert!(
            1 <= i && i <= j && j <= self.len(),
            "splice range out of bounds"
        );
        let mut tokens = Vec::with_capacity(self.len() - (j - i + 1) + phrase.len());
        tokens.extend_from_slice(&self.tokens[..i - 1]);
        tokens.extend_from_slice(phrase.tokens());
        tokens.extend_from_slice(&self.tokens[j..]);
        Caption { tokens }
    }
}

impl fmt::Display for Caption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

/// A nonempty word sequence from the phrase inventory.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Phrase {
    tokens: Vec<String>,
}

impl Phrase {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        Caption::new(tokens).map(|c| Phrase { tokens: c.tokens })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(tokenize(text))
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl fmt::Display for Phrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

/// A deduplicated phrase set with a fixed index assignment: phrases are
/// indexed in sorted order, which also fixes the coordinates of `ψ(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseInventory {
    phrases: Vec<Phrase>,
    index: HashMap<Vec<String>, usize>,
    max_len: usize,
}

impl PhraseInventory {
    pub fn new(phrases: impl IntoIterator<Item = Phrase>) -> Self {
        let sorted: BTreeSet<Phrase> = phrases.into_iter().collect();
        let phrases: Vec<Phrase> = sorted.into_iter().collect();
        let index = phrases
            .iter()
            .enumerate()
            .map(|(k, p)| (p.tokens.clone(), k))
            .collect();
        let max_len = phrases.iter().map(Phrase::len).max().unwrap_or(0);
        PhraseInventory {
            phrases,
            index,
            max_len,
        }
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// Length of the longest phrase.
    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn phrases(&self) -> &[Phrase] {
        &self.phrases
    }

    pub fn get(&self, index: usize) -> Option<&Phrase> {
        self.phrases.get(index)
    }

    pub fn index_of(&self, tokens: &[String]) -> Option<usize> {
        self.index.get(tokens).copied()
    }

    pub fn contains(&self, tokens: &[String]) -> bool {
        self.index.contains_key(tokens)
    }

    /// One phrase per line, in index order.
    pub fn to_text(&self) -> String {
        self.phrases.iter().map(|p| format!("{p}\n")).collect()
    }

    /// SHA-256 of [`to_text`](Self::to_text); ties a model to the ψ coordinates it was trained on.
    pub fn digest(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }

    /// Indices of every inventory phrase occurring as a contiguous run in `tokens`.
    pub fn matches(&self, tokens: &[String]) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for start in 0..tokens.len() {
            let longest = self.max_len.min(tokens.len() - start);
            for len in 1..=longest {
                if let Some(k) = self.index_of(&tokens[start..start + len]) {
                    out.insert(k);
                }
            }
        }
        out
    }
}

/// Loads a phrase inventory, one phrase per line (space-separated tokens).
pub fn load_phrase_inventory(path: impl AsRef<Path>) -> Result<PhraseInventory> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut phrases = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            return Err(Error::parse(path, n + 1, "empty phrase line"));
        }
        let phrase = Phrase::parse(line).map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
        phrases.push(phrase);
    }
    if phrases.is_empty() {
        return Err(Error::parse(path, 0, "phrase inventory is empty"));
    }
    let inventory = PhraseInventory::new(phrases);
    log::info!("loaded {} phrases from {}", inventory.len(), path.display());
    Ok(inventory)
}

pub fn write_phrase_inventory(inventory: &PhraseInventory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, inventory.to_text()).map_err(|e| Error::io(path, e))
}

/// Every contiguous n-gram of length `1..=max_len` in the corpus.
pub fn extract_phrases(corpus: &[Caption], max_len: usize) -> Result<PhraseInventory> {
    if max_len == 0 {
        return Err(Error::InvalidParameter(
            "max phrase length must be at least 1".into(),
        ));
    }
    let mut set = BTreeSet::new();
    for caption in corpus {
        let toks = caption.tokens();
        for start in 0..toks.len() {
            for end in start + 1..=(start + max_len).min(toks.len()) {
                set.insert(Phrase {
                    tokens: toks[start..end].to_vec(),
                });
            }
        }
    }
    Ok(PhraseInventory::new(set))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caps(lines: &[&str]) -> Vec<Caption> {
        lines.iter().map(|l| Caption::parse(l).unwrap()).collect()
    }

    fn texts(inv: &PhraseInventory) -> Vec<String> {
        inv.phrases().iter().map(|p| p.to_string()).collect()
    }

    #[test]
    fn tokenizer_lowercases_and_keeps_punctuation() {
        assert_eq!(
            tokenize("Mike  holds the Bucket.\t"),
            vec!["mike", "holds", "the", "bucket."]
        );
    }

    #[test]
    fn caption_rejects_empty_and_markers() {
        assert!(Caption::parse("   ").is_err());
        assert!(Caption::parse("a <begin> b").is_err());
        assert!(Phrase::parse("<end>").is_err());
    }

    #[test]
    fn word_at_uses_boundary_markers() {
        let c = Caption::parse("a b").unwrap();
        assert_eq!(c.word_at(0), BEGIN);
        assert_eq!(c.word_at(1), "a");
        assert_eq!(c.word_at(2), "b");
        assert_eq!(c.word_at(3), END);
    }

    #[test]
    fn splice_replaces_inclusive_range() {
        let c = Caption::parse("a b c d").unwrap();
        let p = Phrase::parse("x y z").unwrap();
        assert_eq!(c.splice(2, 3, &p).to_string(), "a x y z d");
        assert_eq!(c.splice(1, 4, &p).to_string(), "x y z");
    }

    #[test]
    fn extract_bigram_corpus() {
        let inv = extract_phrases(&caps(&["a b"]), 2).unwrap();
        assert_eq!(texts(&inv), vec!["a", "a b", "b"]);
    }

    #[test]
    fn extract_dedups_repeats() {
        let inv = extract_phrases(&caps(&["a a a"]), 1).unwrap();
        assert_eq!(texts(&inv), vec!["a"]);
    }

    #[test]
    fn extract_rejects_zero_length() {
        assert!(extract_phrases(&caps(&["a"]), 0).is_err());
    }

    #[test]
    fn matches_finds_all_occurring_phrases() {
        let inv = PhraseInventory::new(["b", "a b", "x"].iter().map(|p| Phrase::parse(p).unwrap()));
        let hits = inv.matches(Caption::parse("a b c").unwrap().tokens());
        let found: Vec<String> = hits
            .iter()
            .map(|&k| inv.get(k).unwrap().to_string())
            .collect();
        assert_eq!(found, vec!["a b", "b"]);
    }

    #[test]
    fn load_dedups_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.txt");
        fs::write(&path, "is holding\nis holding\n").unwrap();
        assert_eq!(load_phrase_inventory(&path).unwrap().len(), 1);

        fs::write(&path, "a\n\nb\n").unwrap();
        match load_phrase_inventory(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }

        fs::write(&path, "").unwrap();
        assert!(load_phrase_inventory(&path).is_err());
        assert!(matches!(
            load_phrase_inventory(dir.path().join("missing.txt")),
            Err(Error::Io { .. })
        ));
    }
}
