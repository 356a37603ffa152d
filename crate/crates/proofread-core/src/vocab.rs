//! Word-frequency vocabulary with a character-trie index.
//!
//! Serves as the lexical prior for key correction and auto-correction, the
//! dictionary for the rule judge, and the word source for sampled English
//! test text. Loadable from a two-column TSV (`word\tcount`); a built-in
//! English list ships with the crate.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, LazyLock};

use rand::Rng;

use crate::error::{Error, Result};
use crate::text::levenshtein;

/// Index of a trie node; the root is `TrieId(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrieId(usize);

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: BTreeMap<char, usize>,
    /// Count of the word ending exactly here (0 if none).
    word_count: u64,
    /// Total count of all words passing through this node.
    subtree: u64,
}

/// Immutable word-frequency table plus trie, shareable across threads.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    /// Words in input order (rank order for the shipped list).
    words: Vec<(String, u64)>,
    index: HashMap<String, usize>,
    by_len: BTreeMap<usize, Vec<usize>>,
    cumulative: Vec<u64>,
    total: u64,
    nodes: Vec<TrieNode>,
}

static BUILTIN: LazyLock<Arc<Vocabulary>> = LazyLock::new(|| {
    Arc::new(
        Vocabulary::from_tsv_str(include_str!("../data/vocab_en.tsv"))
            .expect("embedded vocabulary is well-formed"),
    )
});

impl Vocabulary {
    pub fn new(entries: impl IntoIterator<Item = (String, u64)>) -> Result<Self> {
        let mut words: Vec<(String, u64)> = Vec::new();
        let mut index = HashMap::new();
        let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut cumulative = Vec::new();
        let mut total = 0u64;
        let mut nodes = vec![TrieNode::default()];

        for (word, count) in entries {
            if count == 0 {
                return Err(Error::Vocab(format!("word {word:?} has zero count")));
            }
            if word.is_empty() {
                return Err(Error::Vocab("empty word".into()));
            }
            if index.contains_key(&word) {
                return Err(Error::Vocab(format!("duplicate word {word:?}")));
            }
            let id = words.len();
            index.insert(word.clone(), id);
            by_len.entry(word.chars().count()).or_default().push(id);
            total += count;
            cumulative.push(total);

            // Trie insertion.
            let mut node = 0usize;
            nodes[node].subtree += count;
            for ch in word.chars() {
                let next = match nodes[node].children.get(&ch) {
                    Some(&n) => n,
                    None => {
                        nodes.push(TrieNode::default());
                        let n = nodes.len() - 1;
                        nodes[node].children.insert(ch, n);
                        n
                    }
                };
                node = next;
                nodes[node].subtree += count;
            }
            nodes[node].word_count += count;

            words.push((word, count));
        }

        Ok(Self {
            words,
            index,
            by_len,
            cumulative,
            total,
            nodes,
        })
    }

    pub fn empty() -> Self {
        Self::new(std::iter::empty()).expect("empty vocabulary is valid")
    }

    /// Parses `word\tcount` lines; `#`-prefixed lines and blanks are skipped.
    pub fn from_tsv_str(tsv: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in tsv.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, count) = line.split_once('\t').ok_or_else(|| Error::Vocab(format!(
                "line {}: expected \"word\\tcount\", got {line:?}",
                lineno + 1
            )))?;
            let count: u64 = count.trim().parse().map_err(|e| {
                Error::Vocab(format!("line {}: bad count: {e}", lineno + 1))
            })?;
            entries.push((word.to_string(), count));
        }
        Self::new(entries)
    }

    pub fn from_tsv_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tsv_str(&std::fs::read_to_string(path)?)
    }

    /// The English frequency list embedded in the crate.
    pub fn builtin() -> Arc<Vocabulary> {
        Arc::clone(&BUILTIN)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn count(&self, word: &str) -> Option<u64> {
        self.index.get(word).map(|&i| self.words[i].1)
    }

    /// `ln(count / total)` for an in-vocabulary word.
    pub fn log_prior(&self, word: &str) -> Option<f64> {
        self.count(word)
            .map(|c| (c as f64 / self.total as f64).ln())
    }

    pub fn words(&self) -> impl Iterator<Item = (&str, u64)> {
        self.words.iter().map(|(w, c)| (w.as_str(), *c))
    }

    /// Vocabulary words within Levenshtein distance `max_ed` of `query`.
    pub fn candidates_within<'a>(
        &'a self,
        query: &'a str,
        max_ed: usize,
    ) -> impl Iterator<Item = (&'a str, u64)> + 'a {
        let qlen = query.chars().count();
        let lo = qlen.saturating_sub(max_ed);
        let hi = qlen + max_ed;
        self.by_len
            .range(lo..=hi)
            .flat_map(|(_, ids)| ids.iter())
            .map(|&id| (self.words[id].0.as_str(), self.words[id].1))
            .filter(move |(w, _)| levenshtein(query, w) <= max_ed)
    }

    pub fn trie_root(&self) -> TrieId {
        TrieId(0)
    }

    pub fn trie_child(&self, node: TrieId, ch: char) -> Option<TrieId> {
        self.nodes[node.0].children.get(&ch).copied().map(TrieId)
    }

    /// Total count mass of words passing through `node`.
    pub fn trie_mass(&self, node: TrieId) -> u64 {
        self.nodes[node.0].subtree
    }

    /// Count of the word terminating exactly at `node`, if any.
    pub fn trie_word_count(&self, node: TrieId) -> u64 {
        self.nodes[node.0].word_count
    }

    pub fn trie_children(&self, node: TrieId) -> impl Iterator<Item = (char, TrieId)> + '_ {
        self.nodes[node.0]
            .children
            .iter()
            .map(|(&ch, &id)| (ch, TrieId(id)))
    }

    /// Draws one word with probability proportional to its count.
    pub fn sample_word<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&str> {
        if self.total == 0 {
            return None;
        }
        let x = rng.random_range(0..self.total);
        let idx = self.cumulative.partition_point(|&c| c <= x);
        Some(self.words[idx].0.as_str())
    }

    /// Generates space-separated text of at least `n_chars` characters by
    /// frequency-weighted word sampling. Deterministic given the RNG state.
    pub fn sample_text<R: Rng + ?Sized>(&self, n_chars: usize, rng: &mut R) -> String {
        let mut out = String::with_capacity(n_chars + 16);
        while out.len() < n_chars {
            let Some(word) = self.sample_word(rng) else {
                break;
            };
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(word);
        }
        out
    }

    /// Generates a sentence of `n_words` frequency-sampled words.
    pub fn sample_sentence<R: Rng + ?Sized>(&self, n_words: usize, rng: &mut R) -> String {
        let mut words = Vec::with_capacity(n_words);
        for _ in 0..n_words {
            match self.sample_word(rng) {
                Some(w) => words.push(w),
                None => break,
            }
        }
        words.join(" ")
    }
}
