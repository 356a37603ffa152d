//! Keyboard-decoder simulation: literal decoding, key correction (KC),
//! and auto-correction (AC).
//!
//! Corrupted text is re-encoded as noisy touches, then decoded the way a
//! keyboard would: nearest-key literal decoding, a character-level beam
//! search over the vocabulary trie (KC), and a word-level noisy-channel
//! rewrite (AC). Running corrupted text through this stack leaves exactly
//! the errors a real decoder would leave behind.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::keyboard::{SpatialModel, TouchEvent, TouchSequence};
use crate::text::split_tokens;
use crate::vocab::Vocabulary;

/// Tunables for the KC/AC stack. Defaults are the documented constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    /// KC beam width.
    pub beam_width: usize,
    /// AC candidate search radius (Levenshtein).
    pub max_ed: usize,
    /// AC replaces the literal word only when the best candidate wins by
    /// this many nats (default ln 10).
    pub acceptance_margin: f64,
    /// Per-insertion/deletion log-penalty in the channel alignment.
    pub indel_penalty: f64,
    /// Multiplier on the trie/prior language-model terms in KC.
    pub lm_weight: f64,
    /// Pseudo-count standing in for the prior of out-of-vocabulary words:
    /// prior(oov) = ln(oov_pseudo_count / total).
    pub oov_pseudo_count: f64,
    /// Seed for touch synthesis inside [`simulate`].
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam_width: 8,
            max_ed: 2,
            acceptance_margin: std::f64::consts::LN_10,
            indel_penalty: -6.0,
            lm_weight: 1.0,
            oov_pseudo_count: 0.01,
            seed: 0,
        }
    }
}

/// Per-word decode record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordDecode {
    pub literal_word: String,
    pub committed_word: String,
    /// Noisy-channel log-score of the committed word.
    pub score: f64,
    /// Whitespace following this word in the input (verbatim).
    pub separator: String,
}

/// Output of [`simulate`]: the literal decode, the committed correction,
/// and per-word detail. `corrected` always equals `leading_separator`
/// followed by each committed word and its separator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub literal: String,
    pub corrected: String,
    pub leading_separator: String,
    pub per_word: Vec<WordDecode>,
}

/// Synthesizes one touch per layout character of `text`.
///
/// Uppercase letters are case-folded for sampling and flagged so case can
/// be restored after decoding; characters with no key pass through as
/// literal markers.
pub fn encode_touches<R: Rng + ?Sized>(
    text: &str,
    spatial: &SpatialModel,
    rng: &mut R,
) -> TouchSequence {
    let layout = spatial.layout();
    text.chars()
        .map(|ch| {
            if layout.contains(ch) {
                let point = spatial.sample_touch(ch, rng).expect("char is on layout");
                TouchEvent::Key {
                    point,
                    uppercase: false,
                }
            } else {
                let folded = fold_to_layout(ch, layout);
                match folded {
                    Some(lc) => {
                        let point = spatial.sample_touch(lc, rng).expect("char is on layout");
                        TouchEvent::Key {
                            point,
                            uppercase: true,
                        }
                    }
                    None => TouchEvent::Literal(ch),
                }
            }
        })
        .collect()
}

/// Lowercase form of `ch` if that form has a key, for single-char folds.
fn fold_to_layout(ch: char, layout: &crate::keyboard::KeyboardLayout) -> Option<char> {
    if !ch.is_uppercase() {
        return None;
    }
    let mut lower = ch.to_lowercase();
    let lc = lower.next()?;
    if lower.next().is_none() && layout.contains(lc) {
        Some(lc)
    } else {
        None
    }
}

/// Nearest-key decode: each touch becomes its closest key, case restored,
/// literal markers passed through.
pub fn literal_decode(touches: &[TouchEvent], layout: &crate::keyboard::KeyboardLayout) -> String {
    let mut out = String::with_capacity(touches.len());
    for ev in touches {
        match *ev {
            TouchEvent::Key { point, uppercase } => {
                let ch = layout.nearest_key(point);
                if uppercase {
                    out.push(ch.to_uppercase().next().unwrap_or(ch));
                } else {
                    out.push(ch);
                }
            }
            TouchEvent::Literal(ch) => out.push(ch),
        }
    }
    out
}

/// One KC beam state: current trie position (None once off-trie), the
/// emitted characters, and the running score.
#[derive(Debug, Clone)]
struct BeamState {
    node: Option<crate::vocab::TrieId>,
    emitted: String,
    score: f64,
}

/// Character-level key correction: beam search where every touch may emit
/// any key, scored by spatial likelihood plus trie continuation mass.
///
/// Off-trie extensions pay a uniform `-ln(K)` per character (K = key
/// count), which makes the beam fall back to literal decoding in
/// out-of-vocabulary regions. At the end of the token, in-trie states pay
/// the word-termination mass so a completed path's language-model term
/// telescopes to exactly `ln(count/total)`.
pub fn key_correct(
    touches: &[TouchEvent],
    model: &SpatialModel,
    vocab: &Vocabulary,
    k: usize,
) -> String {
    key_correct_with(
        touches,
        model,
        vocab,
        &DecodeConfig {
            beam_width: k.max(1),
            ..DecodeConfig::default()
        },
    )
}

pub fn key_correct_with(
    touches: &[TouchEvent],
    model: &SpatialModel,
    vocab: &Vocabulary,
    cfg: &DecodeConfig,
) -> String {
    let layout = model.layout();
    let key_count = layout.len() as f64;
    let uniform = -key_count.ln() * cfg.lm_weight;
    // A candidate key this far below the nearest key's likelihood can never
    // recover through the prior (max prior swing < 25 nats).
    const PRUNE_WINDOW: f64 = 25.0;

    let mut beam = vec![BeamState {
        node: Some(vocab.trie_root()),
        emitted: String::new(),
        score: 0.0,
    }];

    for ev in touches {
        let mut next: Vec<BeamState> = Vec::with_capacity(beam.len() * 8);
        match *ev {
            TouchEvent::Key { point, uppercase } => {
                let lls: Vec<(char, f64)> = layout
                    .chars()
                    .map(|c| {
                        let ll = model.touch_log_likelihood(point, c).expect("layout char");
                        (c, ll)
                    })
                    .collect();
                let best_ll = lls
                    .iter()
                    .map(|&(_, ll)| ll)
                    .fold(f64::NEG_INFINITY, f64::max);
                for state in &beam {
                    for &(c, ll) in &lls {
                        if ll < best_ll - PRUNE_WINDOW || ll == f64::NEG_INFINITY {
                            continue;
                        }
                        let (node, lm) = match state.node {
                            Some(n) => match vocab.trie_child(n, c) {
                                Some(child) => {
                                    let ratio =
                                        vocab.trie_mass(child) as f64 / vocab.trie_mass(n) as f64;
                                    (Some(child), ratio.ln() * cfg.lm_weight)
                                }
                                None => (None, uniform),
                            },
                            None => (None, uniform),
                        };
                        let mut emitted = state.emitted.clone();
                        if uppercase {
                            emitted.push(c.to_uppercase().next().unwrap_or(c));
                        } else {
                            emitted.push(c);
                        }
                        next.push(BeamState {
                            node,
                            emitted,
                            score: state.score + ll + lm,
                        });
                    }
                }
            }
            TouchEvent::Literal(ch) => {
                for state in &beam {
                    let node = state
                        .node
                        .and_then(|n| vocab.trie_child(n, ch));
                    let mut emitted = state.emitted.clone();
                    emitted.push(ch);
                    next.push(BeamState {
                        node,
                        emitted,
                        score: state.score,
                    });
                }
            }
        }
        next.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.emitted.cmp(&b.emitted))
        });
        next.truncate(cfg.beam_width.max(1));
        beam = next;
        if beam.is_empty() {
            break;
        }
    }

    // Word-termination mass: completed words telescope to ln(count/total);
    // dangling prefixes are charged the out-of-vocabulary pseudo-count.
    let mut finished: Vec<(f64, bool, String)> = beam
        .into_iter()
        .map(|state| {
            let end = match state.node {
                Some(n) => {
                    let wc = vocab.trie_word_count(n);
                    let mass = vocab.trie_mass(n).max(1) as f64;
                    if wc > 0 {
                        (wc as f64 / mass).ln() * cfg.lm_weight
                    } else {
                        (cfg.oov_pseudo_count / mass).ln() * cfg.lm_weight
                    }
                }
                None => 0.0,
            };
            let is_word = state
                .node
                .is_some_and(|n| vocab.trie_word_count(n) > 0);
            (state.score + end, is_word, state.emitted)
        })
        .collect();
    finished.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| b.1.cmp(&a.1))
            .then_with(|| a.2.cmp(&b.2))
    });
    finished
        .into_iter()
        .next()
        .map(|(_, _, emitted)| emitted)
        .unwrap_or_default()
}

/// Trailing characters stripped from a token before vocabulary matching.
const STRIP_TRAIL: &[char] = &['.', ',', '!', '?', ';', ':', '"', '\'', ')', ']', '}'];
/// Leading characters stripped from a token before vocabulary matching.
const STRIP_LEAD: &[char] = &['"', '\'', '(', '[', '{'];

/// Word-level auto-correction over one whitespace-delimited token's
/// touches: noisy-channel argmax over vocabulary candidates within
/// `max_ed` edits of the literal decode, replacing the literal only when
/// the winner clears the acceptance margin.
pub fn auto_correct(
    word_touches: &[TouchEvent],
    model: &SpatialModel,
    vocab: &Vocabulary,
    max_ed: usize,
) -> (String, f64) {
    let cfg = DecodeConfig {
        max_ed,
        ..DecodeConfig::default()
    };
    let literal = literal_decode(word_touches, model.layout());
    auto_correct_impl(word_touches, &literal, &literal, model, vocab, &cfg)
}

/// Case shape of the literal core, used to restore case on a lowercase
/// candidate.
fn restore_case(pattern: &str, candidate: &str) -> String {
    let chars: Vec<char> = pattern.chars().collect();
    let any_lower = chars.iter().any(|c| c.is_lowercase());
    let all_upper = !chars.is_empty() && !any_lower && chars.iter().any(|c| c.is_uppercase());
    if all_upper && chars.len() > 1 {
        return candidate.to_uppercase();
    }
    if chars.first().is_some_and(|c| c.is_uppercase()) {
        let mut out = String::with_capacity(candidate.len());
        let mut it = candidate.chars();
        if let Some(first) = it.next() {
            out.extend(first.to_uppercase());
        }
        out.extend(it);
        return out;
    }
    candidate.to_string()
}

/// Core of AC shared by the public entry point and [`simulate`]:
/// `baseline` is the word the decoder currently holds (the KC output in
/// the full stack, the literal in standalone AC).
fn auto_correct_impl(
    word_touches: &[TouchEvent],
    literal: &str,
    baseline: &str,
    model: &SpatialModel,
    vocab: &Vocabulary,
    cfg: &DecodeConfig,
) -> (String, f64) {
    // Split off punctuation decorations; AC operates on the core.
    let lead = literal.chars().take_while(|c| STRIP_LEAD.contains(c)).count();
    let total_chars = literal.chars().count();
    let trail = literal
        .chars()
        .rev()
        .take_while(|c| STRIP_TRAIL.contains(c))
        .count()
        .min(total_chars - lead);
    let core_len = total_chars - lead - trail;
    let core_literal: String = literal.chars().skip(lead).take(core_len).collect();
    let prefix: String = literal.chars().take(lead).collect();
    let suffix: String = literal.chars().skip(lead + core_len).collect();

    let base_lead = baseline.chars().take_while(|c| STRIP_LEAD.contains(c)).count();
    let base_total = baseline.chars().count();
    let base_trail = baseline
        .chars()
        .rev()
        .take_while(|c| STRIP_TRAIL.contains(c))
        .count()
        .min(base_total - base_lead);
    let core_baseline: String = baseline
        .chars()
        .skip(base_lead)
        .take(base_total - base_lead - base_trail)
        .collect();

    if core_len == 0 {
        let prior = word_prior(baseline, vocab, cfg);
        return (baseline.to_string(), prior);
    }
    let core_events = &word_touches[lead..lead + core_len];
    let lower_literal = core_literal.to_lowercase();
    let lower_baseline = core_baseline.to_lowercase();

    let channel = |word: &str| channel_score(core_events, word, model, cfg);
    let score_of = |word: &str| word_prior(word, vocab, cfg) + channel(word);

    let baseline_score = score_of(&lower_baseline);

    let mut best: Option<(f64, u64, String)> = None;
    let mut consider = |word: &str, count: u64| {
        if word == lower_baseline {
            return;
        }
        let s = score_of(word);
        let better = match &best {
            None => true,
            Some((bs, bc, bw)) => {
                s > *bs || (s == *bs && (count > *bc || (count == *bc && word < bw.as_str())))
            }
        };
        if better {
            best = Some((s, count, word.to_string()));
        }
    };
    for (word, count) in vocab.candidates_within(&lower_literal, cfg.max_ed) {
        consider(word, count);
    }
    if lower_baseline != lower_literal {
        for (word, count) in vocab.candidates_within(&lower_baseline, cfg.max_ed) {
            consider(word, count);
        }
    }

    match best {
        Some((score, _, word)) if score > baseline_score + cfg.acceptance_margin => {
            let cased = restore_case(&core_literal, &word);
            (format!("{prefix}{cased}{suffix}"), score)
        }
        _ => {
            let cased = restore_case(&core_literal, &core_baseline.to_lowercase());
            // Keep the baseline's own casing when it already has any.
            let committed = if core_baseline.chars().any(|c| c.is_uppercase()) {
                baseline.to_string()
            } else {
                format!("{prefix}{cased}{suffix}")
            };
            (committed, baseline_score)
        }
    }
}

/// `ln(count/total)` for vocabulary words, pseudo-count floor otherwise.
fn word_prior(word: &str, vocab: &Vocabulary, cfg: &DecodeConfig) -> f64 {
    let total = vocab.total().max(1) as f64;
    match vocab.count(&word.to_lowercase()) {
        Some(c) => (c as f64 / total).ln(),
        None => (cfg.oov_pseudo_count / total).ln(),
    }
}

/// Best-alignment channel score: Needleman–Wunsch over (touches ×
/// candidate chars) where matches score the spatial log-likelihood and
/// gaps pay `indel_penalty`.
fn channel_score(
    touches: &[TouchEvent],
    candidate: &str,
    model: &SpatialModel,
    cfg: &DecodeConfig,
) -> f64 {
    let cand: Vec<char> = candidate.chars().collect();
    let m = touches.len();
    let n = cand.len();
    let idx = |i: usize, j: usize| i * (n + 1) + j;
    let mut dp = vec![f64::NEG_INFINITY; (m + 1) * (n + 1)];
    dp[idx(0, 0)] = 0.0;
    for i in 0..=m {
        for j in 0..=n {
            if i == 0 && j == 0 {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            if i > 0 {
                best = best.max(dp[idx(i - 1, j)] + cfg.indel_penalty);
            }
            if j > 0 {
                best = best.max(dp[idx(i, j - 1)] + cfg.indel_penalty);
            }
            if i > 0 && j > 0 {
                let ll = match touches[i - 1] {
                    TouchEvent::Key { point, .. } => model
                        .touch_log_likelihood(point, cand[j - 1])
                        .unwrap_or(f64::NEG_INFINITY),
                    TouchEvent::Literal(ch) => {
                        if ch.eq_ignore_ascii_case(&cand[j - 1]) {
                            0.0
                        } else {
                            f64::NEG_INFINITY
                        }
                    }
                };
                best = best.max(dp[idx(i - 1, j - 1)] + ll);
            }
            dp[idx(i, j)] = best;
        }
    }
    dp[idx(m, n)]
}

/// Full simulator pass: tokenize on whitespace, then per token run
/// encode → literal → KC → AC, reassembling with the original separators.
pub fn simulate(
    corrupted: &str,
    model: &SpatialModel,
    vocab: &Vocabulary,
    cfg: &DecodeConfig,
) -> DecodeResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    simulate_with_rng(corrupted, model, vocab, cfg, &mut rng)
}

/// [`simulate`] with an externally managed RNG stream (used by the
/// pipeline to give each example its own derived stream).
pub fn simulate_with_rng<R: Rng + ?Sized>(
    corrupted: &str,
    model: &SpatialModel,
    vocab: &Vocabulary,
    cfg: &DecodeConfig,
    rng: &mut R,
) -> DecodeResult {
    let (leading, tokens) = split_tokens(corrupted);
    let mut literal_all = leading.clone();
    let mut corrected_all = leading.clone();
    let mut per_word = Vec::with_capacity(tokens.len());

    for tok in &tokens {
        let touches = encode_touches(&tok.text, model, rng);
        let literal = literal_decode(&touches, model.layout());
        let kc = key_correct_with(&touches, model, vocab, cfg);
        let (committed, score) = auto_correct_impl(&touches, &literal, &kc, model, vocab, cfg);
        literal_all.push_str(&literal);
        literal_all.push_str(&tok.sep);
        corrected_all.push_str(&committed);
        corrected_all.push_str(&tok.sep);
        per_word.push(WordDecode {
            literal_word: literal,
            committed_word: committed,
            score,
            separator: tok.sep.clone(),
        });
    }

    DecodeResult {
        literal: literal_all,
        corrected: corrected_all,
        leading_separator: leading,
        per_word,
    }
}
