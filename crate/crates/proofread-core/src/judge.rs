//! Pluggable judge: grammar, same-meaning, good-fix, and filter checks.
//!
//! Two implementations ship: [`RuleJudge`], a deterministic dictionary +
//! token-heuristic judge used throughout the tests, and [`HttpJudge`], a
//! JSON-over-HTTP client for backing the same checks with a real LLM.

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::pipeline::FilterVerdict;
use crate::text::levenshtein;
use crate::vocab::Vocabulary;

/// The four checks the proofreading stack asks of an LLM (or a stand-in).
///
/// `check_grammar` returns **true when the text has an error**. All
/// implementations must be deterministic per call and safe to share
/// across threads.
pub trait Judge: Send + Sync {
    fn check_grammar(&self, text: &str) -> Result<bool>;
    /// True when `a` and `b` carry the same meaning.
    fn check_same_meaning(&self, a: &str, b: &str) -> Result<bool>;
    /// True when `candidate` is a good fix of the (possibly corrupted)
    /// `input`: grammatical and meaning-preserving.
    fn check_good_fix(&self, input: &str, candidate: &str) -> Result<bool>;
    /// The four dataset-filter criteria for a (source, reference) pair.
    fn check_filter_criteria(&self, source: &str, reference: &str) -> Result<FilterVerdict>;
}

const STOPWORDS: &[&str] = &[
    "the", "a", "an", "and", "or", "but", "if", "then", "than", "that", "this", "these",
    "those", "is", "are", "was", "were", "be", "been", "being", "am", "to", "of", "in",
    "on", "at", "for", "with", "by", "from", "as", "it", "its", "i", "you", "he", "she",
    "we", "they", "me", "him", "her", "us", "them", "my", "your", "his", "their", "our",
    "do", "does", "did", "have", "has", "had", "will", "would", "can", "could", "shall",
    "should", "may", "might", "must", "so", "up", "out", "about", "into", "over", "after",
    "there", "here", "when", "where", "how", "what", "who", "which", "why", "all", "any",
    "both", "each", "very", "just", "also", "too", "s", "t",
];

const NEGATIONS: &[&str] = &[
    "not", "no", "never", "none", "nothing", "neither", "nor", "nobody", "nowhere",
    "cannot",
];

/// Irregular past/participle → base form.
const IRREGULAR_PAST: &[(&str, &str)] = &[
    ("went", "go"), ("gone", "go"), ("ran", "run"), ("ate", "eat"), ("eaten", "eat"),
    ("saw", "see"), ("seen", "see"), ("took", "take"), ("taken", "take"),
    ("made", "make"), ("came", "come"), ("knew", "know"), ("known", "know"),
    ("thought", "think"), ("got", "get"), ("gotten", "get"), ("gave", "give"),
    ("given", "give"), ("found", "find"), ("told", "tell"), ("said", "say"),
    ("felt", "feel"), ("left", "leave"), ("did", "do"), ("done", "do"),
    ("had", "have"), ("was", "be"), ("were", "be"), ("been", "be"), ("wrote", "write"),
    ("written", "write"), ("stood", "stand"), ("sat", "sit"), ("held", "hold"),
    ("brought", "bring"), ("spoke", "speak"), ("spoken", "speak"), ("met", "meet"),
    ("paid", "pay"), ("lost", "lose"), ("sold", "sell"), ("built", "build"),
    ("sent", "send"), ("fell", "fall"), ("fallen", "fall"), ("grew", "grow"),
    ("grown", "grow"), ("drew", "draw"), ("drawn", "draw"), ("flew", "fly"),
    ("wore", "wear"), ("chose", "choose"), ("broke", "break"), ("broken", "break"),
    ("bought", "buy"), ("caught", "catch"), ("taught", "teach"), ("heard", "hear"),
    ("kept", "keep"), ("meant", "mean"), ("led", "lead"), ("read", "read"),
    ("understood", "understand"), ("won", "win"), ("lay", "lie"), ("rose", "rise"),
];

/// Crude tense/aspect class of a surface word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TenseClass {
    Base,
    Past,
    Progressive,
    PresentThird,
}

/// Deterministic judge: dictionary spell check plus content-word overlap
/// with negation parity and tense heuristics. Meaning checks against
/// corrupted text use fuzzy (edit-distance) stem matching so typos still
/// anchor to their intended words.
#[derive(Debug, Clone)]
pub struct RuleJudge {
    dictionary: Arc<Vocabulary>,
    /// Minimum content-stem overlap ratio to call two texts same-meaning.
    overlap_threshold: f64,
}

impl Default for RuleJudge {
    fn default() -> Self {
        Self::new(Vocabulary::builtin())
    }
}

impl RuleJudge {
    pub fn new(dictionary: Arc<Vocabulary>) -> Self {
        Self {
            dictionary,
            overlap_threshold: 0.6,
        }
    }

    /// Lowercased word tokens. URLs pass through verbatim; other tokens
    /// lose leading/trailing punctuation but keep inner apostrophes, so
    /// contractions stay matchable against the dictionary.
    fn tokens(text: &str) -> Vec<String> {
        text.split_whitespace()
            .filter_map(|raw| {
                let lower = raw.to_lowercase();
                if Self::is_url(&lower) {
                    return Some(lower);
                }
                let trimmed =
                    lower.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'');
                let trimmed = trimmed.trim_matches('\'');
                (!trimmed.is_empty()).then(|| trimmed.to_string())
            })
            .collect()
    }

    fn is_url(token: &str) -> bool {
        token.starts_with("http://") || token.starts_with("https://") || token.starts_with("www.")
    }

    /// Tokens that face the spell check: alphabetic with optional
    /// apostrophes. Numbers, URLs, times, and symbol-bearing tokens are
    /// exempt.
    fn spellable(token: &str) -> bool {
        token.chars().any(|c| c.is_ascii_alphabetic())
            && token
                .chars()
                .all(|c| c.is_ascii_alphabetic() || c == '\'')
    }

    fn is_negation(token: &str) -> bool {
        if NEGATIONS.contains(&token) {
            return true;
        }
        let bare: String = token.chars().filter(|&c| c != '\'').collect();
        matches!(
            bare.as_str(),
            "dont" | "cant" | "wont" | "didnt" | "isnt" | "wasnt" | "arent" | "werent"
                | "couldnt" | "shouldnt" | "wouldnt" | "havent" | "hasnt" | "hadnt"
                | "doesnt" | "aint" | "mustnt" | "neednt"
        )
    }

    /// Suffix-stripping stem with an irregular-verb table.
    fn stem(token: &str) -> String {
        // Peel clitics first: "world's" → "world", "i'll" → "i".
        let t = token
            .strip_suffix("'s")
            .or_else(|| token.strip_suffix("'ll"))
            .or_else(|| token.strip_suffix("'re"))
            .or_else(|| token.strip_suffix("'ve"))
            .or_else(|| token.strip_suffix("'d"))
            .or_else(|| token.strip_suffix("'m"))
            .unwrap_or(token);
        if let Some(&(_, base)) = IRREGULAR_PAST.iter().find(|&&(w, _)| w == t) {
            return base.to_string();
        }
        let stripped = if t.len() > 5 && t.ends_with("ing") {
            &t[..t.len() - 3]
        } else if t.len() > 4 && t.ends_with("ied") {
            // "tried" → "tri" → normalize below to "try"-ish "tri".
            &t[..t.len() - 2]
        } else if t.len() > 3 && t.ends_with("ed") {
            &t[..t.len() - 2]
        } else if t.len() > 3 && t.ends_with("es") {
            &t[..t.len() - 1]
        } else if t.len() > 2 && t.ends_with('s') && !t.ends_with("ss") {
            &t[..t.len() - 1]
        } else {
            t
        };
        // Drop a trailing 'e' so make/making and use/used share a stem,
        // and collapse a doubled final consonant (stopped → stop).
        let mut s = stripped.to_string();
        if s.len() > 3 && s.ends_with('e') {
            s.pop();
        }
        let bytes = s.as_bytes();
        if bytes.len() > 3 && bytes[bytes.len() - 1] == bytes[bytes.len() - 2] {
            s.pop();
        }
        s
    }

    fn tense_class(token: &str) -> TenseClass {
        if IRREGULAR_PAST
            .iter()
            .any(|&(w, b)| w == token && w != b)
        {
            return TenseClass::Past;
        }
        if token.len() > 4 && token.ends_with("ing") {
            TenseClass::Progressive
        } else if token.len() > 3 && token.ends_with("ed") {
            TenseClass::Past
        } else if token.len() > 3 && token.ends_with('s') && !token.ends_with("ss") {
            TenseClass::PresentThird
        } else {
            TenseClass::Base
        }
    }

    fn negation_parity(tokens: &[String]) -> bool {
        tokens.iter().filter(|t| Self::is_negation(t)).count() % 2 == 1
    }

    /// Content-stem multiset: stopwords and negation markers excluded.
    fn content_stems(tokens: &[String]) -> HashMap<String, usize> {
        let mut out = HashMap::new();
        for t in tokens {
            if STOPWORDS.contains(&t.as_str()) || Self::is_negation(t) {
                continue;
            }
            *out.entry(Self::stem(t)).or_insert(0) += 1;
        }
        out
    }

    /// Multiset overlap ratio with optional fuzzy stem matching: matched
    /// mass over the larger side's mass.
    fn overlap(a: &HashMap<String, usize>, b: &HashMap<String, usize>, fuzzy: bool) -> f64 {
        let mass = |m: &HashMap<String, usize>| m.values().sum::<usize>();
        let (ma, mb) = (mass(a), mass(b));
        if ma == 0 && mb == 0 {
            return 1.0;
        }
        let mut remaining: HashMap<&str, usize> =
            b.iter().map(|(k, &v)| (k.as_str(), v)).collect();
        let mut matched = 0usize;
        for (stem, &count) in a {
            for _ in 0..count {
                let exact = remaining
                    .get_mut(stem.as_str())
                    .filter(|c| **c > 0)
                    .map(|c| {
                        *c -= 1;
                    })
                    .is_some();
                if exact {
                    matched += 1;
                    continue;
                }
                if fuzzy {
                    let tol = if stem.chars().count() <= 4 { 1 } else { 2 };
                    let hit = remaining
                        .iter()
                        .filter(|&(k, &c)| c > 0 && levenshtein(stem, k) <= tol)
                        .map(|(&k, _)| k)
                        .min();
                    if let Some(k) = hit {
                        *remaining.get_mut(k).unwrap() -= 1;
                        matched += 1;
                    }
                }
            }
        }
        matched as f64 / ma.max(mb) as f64
    }

    fn same_meaning_inner(&self, a: &str, b: &str, fuzzy: bool) -> bool {
        let mut ta = Self::tokens(a);
        let mut tb = Self::tokens(b);
        if Self::negation_parity(&ta) != Self::negation_parity(&tb) {
            return false;
        }
        if fuzzy {
            // A corrupted stopword ("cqn", "yoy") would count as content
            // on one side while its clean form is excluded on the other.
            ta = self.drop_typoed_stopwords(ta);
            tb = self.drop_typoed_stopwords(tb);
        }
        let sa = Self::content_stems(&ta);
        let sb = Self::content_stems(&tb);
        Self::overlap(&sa, &sb, fuzzy) >= self.overlap_threshold
    }

    fn drop_typoed_stopwords(&self, tokens: Vec<String>) -> Vec<String> {
        tokens
            .into_iter()
            .filter(|t| {
                !(Self::spellable(t)
                    && !self.dictionary.contains(t)
                    && STOPWORDS.iter().any(|s| levenshtein(t, s) <= 1))
            })
            .collect()
    }

    /// Tense change detection over dictionary words whose stems match
    /// (fuzzily, so lightly corrupted counterparts still align).
    fn tense_changed(&self, a: &str, b: &str) -> bool {
        let clean = |text: &str| -> Vec<(String, TenseClass)> {
            Self::tokens(text)
                .into_iter()
                .filter(|t| {
                    Self::spellable(t)
                        && self.dictionary.contains(t)
                        && !STOPWORDS.contains(&t.as_str())
                        && !Self::is_negation(t)
                })
                .map(|t| (Self::stem(&t), Self::tense_class(&t)))
                .collect()
        };
        let wa = clean(a);
        let mut wb = clean(b);
        for (stem_a, class_a) in &wa {
            if let Some(pos) = wb.iter().position(|(s, _)| s == stem_a) {
                let (_, class_b) = wb.remove(pos);
                if class_b != *class_a {
                    return true;
                }
            }
        }
        false
    }
}

impl Judge for RuleJudge {
    fn check_grammar(&self, text: &str) -> Result<bool> {
        let tokens = Self::tokens(text);
        for w in tokens.windows(2) {
            if w[0] == w[1] && Self::spellable(&w[0]) {
                return Ok(true); // doubled word, "the the"
            }
        }
        Ok(tokens
            .iter()
            .any(|t| Self::spellable(t) && !self.dictionary.contains(t)))
    }

    fn check_same_meaning(&self, a: &str, b: &str) -> Result<bool> {
        Ok(self.same_meaning_inner(a, b, false))
    }

    fn check_good_fix(&self, input: &str, candidate: &str) -> Result<bool> {
        Ok(!self.check_grammar(candidate)? && self.same_meaning_inner(input, candidate, true))
    }

    fn check_filter_criteria(&self, source: &str, reference: &str) -> Result<FilterVerdict> {
        let ref_has_errors = self.check_grammar(reference)?;
        let tokens = Self::tokens(reference);
        let ref_not_fluent = reference.trim().is_empty()
            || tokens.windows(3).any(|w| w[0] == w[1] && w[1] == w[2])
            || tokens.iter().any(|t| t.chars().count() > 25);
        let ref_diff_meaning = !self.same_meaning_inner(source, reference, true);
        let ref_diff_tone = self.tense_changed(source, reference);
        Ok(FilterVerdict::from_flags(
            ref_has_errors,
            ref_not_fluent,
            ref_diff_meaning,
            ref_diff_tone,
        ))
    }
}

/// Counting semaphore bounding concurrent HTTP calls.
#[derive(Debug)]
struct Gate {
    slots: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            slots: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut slots = self.slots.lock().unwrap();
        while *slots == 0 {
            slots = self.cv.wait(slots).unwrap();
        }
        *slots -= 1;
    }

    fn release(&self) {
        *self.slots.lock().unwrap() += 1;
        self.cv.notify_one();
    }
}

/// JSON-over-HTTP judge client.
///
/// Wire format: `POST {endpoint}/judge` with body
/// `{"task": "grammar"|"meaning"|"good_fix"|"filter", "texts": [..]}`,
/// expecting `{"verdict": bool}` (or a [`FilterVerdict`]-shaped object for
/// the filter task).
pub struct HttpJudge {
    url: String,
    client: reqwest::blocking::Client,
    gate: Gate,
}

impl HttpJudge {
    pub fn new(endpoint: impl Into<String>) -> Result<Self> {
        Self::with_limits(endpoint, 8, Duration::from_secs(30))
    }

    pub fn with_limits(
        endpoint: impl Into<String>,
        max_in_flight: usize,
        timeout: Duration,
    ) -> Result<Self> {
        let base = endpoint.into();
        let url = format!("{}/judge", base.trim_end_matches('/'));
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Judge(e.to_string()))?;
        Ok(Self {
            url,
            client,
            gate: Gate::new(max_in_flight),
        })
    }

    fn call(&self, task: &str, texts: &[&str]) -> Result<serde_json::Value> {
        #[derive(Deserialize)]
        struct JudgeResponse {
            verdict: serde_json::Value,
        }

        self.gate.acquire();
        let result = self
            .client
            .post(&self.url)
            .json(&json!({ "task": task, "texts": texts }))
            .send();
        self.gate.release();

        let resp = result.map_err(|e| Error::Judge(format!("{task}: {e}")))?;
        if !resp.status().is_success() {
            return Err(Error::Judge(format!(
                "{task}: server returned {}",
                resp.status()
            )));
        }
        let body: JudgeResponse = resp
            .json()
            .map_err(|e| Error::Judge(format!("{task}: bad response: {e}")))?;
        Ok(body.verdict)
    }

    fn call_bool(&self, task: &str, texts: &[&str]) -> Result<bool> {
        self.call(task, texts)?
            .as_bool()
            .ok_or_else(|| Error::Judge(format!("{task}: verdict is not a boolean")))
    }
}

impl Judge for HttpJudge {
    fn check_grammar(&self, text: &str) -> Result<bool> {
        self.call_bool("grammar", &[text])
    }

    fn check_same_meaning(&self, a: &str, b: &str) -> Result<bool> {
        self.call_bool("meaning", &[a, b])
    }

    fn check_good_fix(&self, input: &str, candidate: &str) -> Result<bool> {
        self.call_bool("good_fix", &[input, candidate])
    }

    fn check_filter_criteria(&self, source: &str, reference: &str) -> Result<FilterVerdict> {
        #[derive(Deserialize)]
        struct Wire {
            ref_has_errors: bool,
            ref_not_fluent: bool,
            ref_diff_meaning: bool,
            ref_diff_tone: bool,
        }
        let value = self.call("filter", &[source, reference])?;
        let wire: Wire = serde_json::from_value(value)
            .map_err(|e| Error::Judge(format!("filter: bad verdict object: {e}")))?;
        Ok(FilterVerdict::from_flags(
            wire.ref_has_errors,
            wire.ref_not_fluent,
            wire.ref_diff_meaning,
            wire.ref_diff_tone,
        ))
    }
}
