//! Dataset pipeline: corrupt → simulate → post-rules → filter → JSONL.
//!
//! Each clean corpus line becomes the reference of one candidate example;
//! its source is the line after corruption and keyboard re-decoding, with
//! emoji/date/URL tokens restored from the reference. Examples that the
//! judge flags (or that came through unchanged) are dropped.

use std::io::{BufRead, Write};
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::corruption::{corrupt_seeded, CorruptionConfig};
use crate::decoder::{simulate, DecodeConfig};
use crate::error::{Error, Result};
use crate::judge::Judge;
use crate::text::{derive_seed, levenshtein, split_tokens};
use crate::vocab::Vocabulary;

/// The four §3 filter criteria plus the computed keep flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    /// The reference sentence still has errors remaining.
    pub ref_has_errors: bool,
    /// The reference sentence is not fluent.
    pub ref_not_fluent: bool,
    /// The reference changes the meaning of the source.
    pub ref_diff_meaning: bool,
    /// The reference shifts tone/aspect/tense.
    pub ref_diff_tone: bool,
    /// `!(any of the four)`.
    pub keep: bool,
}

impl FilterVerdict {
    pub fn from_flags(
        ref_has_errors: bool,
        ref_not_fluent: bool,
        ref_diff_meaning: bool,
        ref_diff_tone: bool,
    ) -> Self {
        Self {
            ref_has_errors,
            ref_not_fluent,
            ref_diff_meaning,
            ref_diff_tone,
            keep: !(ref_has_errors || ref_not_fluent || ref_diff_meaning || ref_diff_tone),
        }
    }

    /// Field-wise OR, for multi-reference examples.
    fn or(self, other: Self) -> Self {
        Self::from_flags(
            self.ref_has_errors || other.ref_has_errors,
            self.ref_not_fluent || other.ref_not_fluent,
            self.ref_diff_meaning || other.ref_diff_meaning,
            self.ref_diff_tone || other.ref_diff_tone,
        )
    }
}

/// Provenance carried with each example.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExampleMeta {
    /// Per-example derived seed (corruption and decoding streams).
    pub seed: u64,
    /// Pipeline stages the example passed through, in order.
    pub pipeline_stage_tags: Vec<String>,
    /// Judge verdict recorded at filter time, when a judge ran.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub judge_verdicts: Option<FilterVerdict>,
}

/// One dataset item: corrupted source, reference corrections, provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofreadExample {
    pub source: String,
    pub references: Vec<String>,
    #[serde(default)]
    pub meta: ExampleMeta,
}

/// Everything the dataset builder needs besides corpus/vocab/judge.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub corruption: CorruptionConfig,
    pub decode: DecodeConfig,
}

static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(https?://\S+|www\.\S+)$").unwrap());
static DATE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\d{1,2}[/\-.]\d{1,2}[/\-.]\d{2,4}$").unwrap());
static TIME_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\d{1,2}:\d{2}(:\d{2})?([ap]m)?$").unwrap());
static EMOTICON_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^([:;=8xX]'?-?[)(\]\[dDpPoO/\\|*3cC]+|[)(\]\[dD]'?-?[:;=8])$").unwrap()
});

fn has_emoji(token: &str) -> bool {
    token.chars().any(|c| {
        matches!(u32::from(c),
            0x2600..=0x27BF        // misc symbols, dingbats
            | 0x1F000..=0x1FAFF    // emoji blocks
            | 0xFE0F | 0x200D)
    })
}

/// Tokens the post-rules protect: restored verbatim from the source.
fn is_protected(token: &str) -> bool {
    URL_RE.is_match(token)
        || DATE_RE.is_match(token)
        || TIME_RE.is_match(token)
        || EMOTICON_RE.is_match(token)
        || has_emoji(token)
}

/// Restores emoji/emoticon, date/time, and URL tokens of `text` to their
/// exact form in the pre-corruption `original`, using a minimal-edit token
/// alignment. Idempotent; text without such tokens passes unchanged.
pub fn apply_post_rules(text: &str, original: &str) -> String {
    let (leading, tokens) = split_tokens(text);
    let orig_tokens: Vec<String> = original
        .split_whitespace()
        .map(str::to_string)
        .collect();
    if tokens.is_empty() || orig_tokens.is_empty() {
        return text.to_string();
    }

    // Minimal-edit alignment over token sequences; substitution cost is the
    // normalized char distance so corrupted tokens anchor to their source.
    let n = tokens.len();
    let m = orig_tokens.len();
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    let mut cost = vec![0.0f64; (n + 1) * (m + 1)];
    for i in 1..=n {
        cost[idx(i, 0)] = i as f64;
    }
    for j in 1..=m {
        cost[idx(0, j)] = j as f64;
    }
    for i in 1..=n {
        for j in 1..=m {
            let a = &tokens[i - 1].text;
            let b = &orig_tokens[j - 1];
            let maxlen = a.chars().count().max(b.chars().count()).max(1);
            let sub = levenshtein(a, b) as f64 / maxlen as f64;
            cost[idx(i, j)] = (cost[idx(i - 1, j - 1)] + sub)
                .min(cost[idx(i - 1, j)] + 1.0)
                .min(cost[idx(i, j - 1)] + 1.0);
        }
    }
    // Backtrace, collecting substitution pairs (i-1, j-1).
    let mut pairs = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        let a = &tokens[i - 1].text;
        let b = &orig_tokens[j - 1];
        let maxlen = a.chars().count().max(b.chars().count()).max(1);
        let sub = levenshtein(a, b) as f64 / maxlen as f64;
        let here = cost[idx(i, j)];
        if (here - (cost[idx(i - 1, j - 1)] + sub)).abs() < 1e-9 {
            pairs.push((i - 1, j - 1));
            i -= 1;
            j -= 1;
        } else if (here - (cost[idx(i - 1, j)] + 1.0)).abs() < 1e-9 {
            i -= 1;
        } else {
            j -= 1;
        }
    }

    let mut out_tokens: Vec<String> = tokens.iter().map(|t| t.text.clone()).collect();
    for (ti, oj) in pairs {
        let orig = &orig_tokens[oj];
        if is_protected(orig) && out_tokens[ti] != *orig {
            out_tokens[ti] = orig.clone();
        }
    }

    let mut out = leading;
    for (tok, text) in tokens.iter().zip(&out_tokens) {
        out.push_str(text);
        out.push_str(&tok.sep);
    }
    out
}

/// Runs the judge's four filter criteria; multi-reference examples flag a
/// criterion if any reference trips it.
pub fn filter_example(ex: &ProofreadExample, judge: &dyn Judge) -> Result<FilterVerdict> {
    let mut combined: Option<FilterVerdict> = None;
    for reference in &ex.references {
        let v = judge.check_filter_criteria(&ex.source, reference)?;
        combined = Some(match combined {
            Some(acc) => acc.or(v),
            None => v,
        });
    }
    combined.ok_or(Error::EmptyTargets)
}

/// Builds the dataset from clean corpus lines. Per-line seeds derive from
/// `(config seed, line index)`, so output is deterministic and per-line
/// work parallelizes; output order matches input order.
pub fn build_dataset(
    lines: &[String],
    config: &PipelineConfig,
    vocab: &Vocabulary,
    judge: &dyn Judge,
) -> Result<Vec<ProofreadExample>> {
    config.corruption.validate()?;
    let spatial = config.corruption.spatial_model();
    let produced: Vec<Option<ProofreadExample>> = lines
        .par_iter()
        .enumerate()
        .map(|(i, line)| -> Result<Option<ProofreadExample>> {
            let seed = derive_seed(config.corruption.seed, i as u64);
            let (corrupted, _log) = corrupt_seeded(line, &config.corruption, derive_seed(seed, 0));
            let decode = DecodeConfig {
                seed: derive_seed(seed, 1),
                ..config.decode.clone()
            };
            let sim = simulate(&corrupted, &spatial, vocab, &decode);
            let source = apply_post_rules(&sim.corrected, line);

            // Unchanged sources teach nothing; drop them.
            if source.nfc().eq(line.nfc()) || source.is_empty() {
                return Ok(None);
            }
            let mut ex = ProofreadExample {
                source,
                references: vec![line.clone()],
                meta: ExampleMeta {
                    seed,
                    pipeline_stage_tags: vec![
                        "corrupt".into(),
                        "simulate".into(),
                        "post_rules".into(),
                        "filter".into(),
                    ],
                    judge_verdicts: None,
                },
            };
            let verdict =
                filter_example(&ex, judge).map_err(|e| Error::Judge(format!("line {i}: {e}")))?;
            if !verdict.keep {
                return Ok(None);
            }
            ex.meta.judge_verdicts = Some(verdict);
            Ok(Some(ex))
        })
        .collect::<Result<_>>()?;
    Ok(produced.into_iter().flatten().collect())
}

/// Serializes examples as JSONL (one object per line, UTF-8).
pub fn write_jsonl<W: Write>(mut w: W, examples: &[ProofreadExample]) -> Result<()> {
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSONL dataset, reporting the 1-based line of any bad record.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<ProofreadExample>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: ProofreadExample =
            serde_json::from_str(&line).map_err(|e| Error::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
        if ex.references.is_empty() {
            return Err(Error::Malformed {
                line: i + 1,
                message: "references must be non-empty".into(),
            });
        }
        out.push(ex);
    }
    Ok(out)
}
