//! Serving-stack simulation: length-bucketed inference, paragraph
//! segmentation, speculative decoding, int8 table quantization, and the
//! target-call benchmark.

pub mod model;
pub mod speculative;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{derive_seed, split_tokens};

pub use model::{EditChannelModel, StaticModel, TargetModel, EOS_TOKEN, PAD_TOKEN, UNK_TOKEN};
pub use speculative::{autoregressive_decode, speculative_decode, SpecDecodeTrace, StepRecord};

/// Serving knobs: bucket shape set, sampling temperature, draft length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServingConfig {
    pub bucket_keys: Vec<usize>,
    pub temperature: f64,
    pub max_draft_len: usize,
    /// Accept/emit by argmax instead of sampling (temperature 0 does the
    /// same; the flag keeps configs explicit).
    pub greedy: bool,
    pub seed: u64,
}

impl Default for ServingConfig {
    fn default() -> Self {
        Self {
            bucket_keys: vec![16, 32, 64, 128],
            temperature: 0.3,
            max_draft_len: 8,
            greedy: false,
            seed: 0,
        }
    }
}

impl ServingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bucket_keys.is_empty() {
            return Err(Error::InvalidConfig("bucket_keys must be non-empty".into()));
        }
        if self.bucket_keys[0] == 0 || self.bucket_keys.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "bucket_keys must be positive and strictly increasing".into(),
            ));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_draft_len == 0 {
            return Err(Error::InvalidConfig("max_draft_len must be >= 1".into()));
        }
        Ok(())
    }

    pub fn max_bucket(&self) -> usize {
        *self.bucket_keys.last().unwrap_or(&0)
    }
}

/// Smallest bucket key that fits `token_len`; over-length inputs are the
/// caller's cue to segment first.
pub fn pick_bucket(cfg: &ServingConfig, token_len: usize) -> Result<usize> {
    cfg.validate()?;
    cfg.bucket_keys
        .iter()
        .copied()
        .find(|&k| k >= token_len)
        .ok_or(Error::OverLength { tokens: token_len, max: cfg.max_bucket() })
}

/// Pads token ids up to their bucket length with the model's pad token.
pub fn pad_to_bucket(
    input: &[u32],
    cfg: &ServingConfig,
    model: &dyn TargetModel,
) -> Result<Vec<u32>> {
    let bucket = pick_bucket(cfg, input.len())?;
    let mut padded = input.to_vec();
    padded.resize(bucket, model.pad_token());
    Ok(padded)
}

/// One independently-servable piece of a document, with the separator
/// that followed it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub text: String,
    pub sep: String,
}

/// Lossless document split: `leading + Σ(text + sep)` rebuilds the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    pub leading: String,
    pub segments: Vec<Segment>,
}

impl Segmentation {
    pub fn rejoin(&self) -> String {
        let mut out = self.leading.clone();
        for seg in &self.segments {
            out.push_str(&seg.text);
            out.push_str(&seg.sep);
        }
        out
    }
}

fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn ends_sentence(token: &str) -> bool {
    token
        .trim_end_matches(['"', '\'', ')', ']', '}'])
        .ends_with(['.', '!', '?'])
}

/// Splits an oversize paragraph into ≤ `max_tokens` chunks, preferring
/// sentence-final cuts, preserving every separator byte.
fn split_paragraph(text: &str, trailing_sep: String, max_tokens: usize) -> Vec<Segment> {
    let (leading, tokens) = split_tokens(text);
    if tokens.len() <= max_tokens {
        return vec![Segment { text: text.to_string(), sep: trailing_sep }];
    }
    let mut cuts = Vec::new(); // exclusive end indices
    let mut start = 0;
    while tokens.len() - start > max_tokens {
        let window = &tokens[start..start + max_tokens];
        let cut = window
            .iter()
            .rposition(|t| ends_sentence(&t.text))
            .map(|p| start + p + 1)
            .unwrap_or(start + max_tokens);
        cuts.push(cut);
        start = cut;
    }
    cuts.push(tokens.len());

    let mut segments = Vec::with_capacity(cuts.len());
    let mut start = 0;
    for (ci, &end) in cuts.iter().enumerate() {
        let mut text = if ci == 0 { leading.clone() } else { String::new() };
        for (ti, tok) in tokens[start..end].iter().enumerate() {
            text.push_str(&tok.text);
            let is_boundary = ti + 1 == end - start && ci + 1 != cuts.len();
            if !is_boundary {
                text.push_str(&tok.sep);
            }
        }
        let sep = if ci + 1 == cuts.len() {
            trailing_sep.clone()
        } else {
            tokens[end - 1].sep.clone()
        };
        segments.push(Segment { text, sep });
        start = end;
    }
    segments
}

/// Splits a document at newline paragraph boundaries, then splits any
/// paragraph longer than the largest bucket at sentence/word boundaries.
/// `rejoin` of the result is byte-identical to the document.
pub fn segment(document: &str, cfg: &ServingConfig) -> Result<Segmentation> {
    cfg.validate()?;
    let max_tokens = cfg.max_bucket();
    let mut leading = String::new();
    let mut pieces: Vec<(String, String)> = Vec::new();
    let mut current = String::new();
    let mut chars = document.chars().peekable();
    while let Some(c) = chars.next() {
        if c.is_whitespace() {
            let mut run = String::new();
            run.push(c);
            while let Some(&next) = chars.peek() {
                if next.is_whitespace() {
                    run.push(next);
                    chars.next();
                } else {
                    break;
                }
            }
            if run.contains('\n') {
                if current.is_empty() && pieces.is_empty() {
                    leading.push_str(&run);
                } else {
                    pieces.push((std::mem::take(&mut current), run));
                }
            } else {
                current.push_str(&run);
            }
        } else {
            current.push(c);
        }
    }
    if !current.is_empty() {
        pieces.push((current, String::new()));
    }

    let mut segments = Vec::new();
    for (text, sep) in pieces {
        if token_count(&text) > max_tokens {
            segments.extend(split_paragraph(&text, sep, max_tokens));
        } else {
            segments.push(Segment { text, sep });
        }
    }
    Ok(Segmentation { leading, segments })
}

/// One int8-quantized parameter table with its symmetric scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedTable {
    pub data: Vec<i8>,
    pub scale: f64,
}

impl QuantizedTable {
    /// Symmetric per-table quantization, scale = max|x| / 127; an all-zero
    /// table takes scale 1 by convention.
    pub fn quantize(values: &[f64]) -> Self {
        let max_abs = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let scale = if max_abs == 0.0 { 1.0 } else { max_abs / 127.0 };
        let data = values
            .iter()
            .map(|&v| (v / scale).round().clamp(-127.0, 127.0) as i8)
            .collect();
        Self { data, scale }
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.data.iter().map(|&q| f64::from(q) * self.scale).collect()
    }
}

/// Quantizes every parameter table of `model` and returns the model
/// rebuilt on the dequantized values, plus the int8 tables themselves.
pub fn quantize_tables(
    model: &dyn TargetModel,
) -> Result<(Box<dyn TargetModel>, BTreeMap<String, QuantizedTable>)> {
    let tables = model.parameter_tables();
    let quantized: BTreeMap<String, QuantizedTable> = tables
        .iter()
        .map(|(name, values)| (name.clone(), QuantizedTable::quantize(values)))
        .collect();
    let dequantized: BTreeMap<String, Vec<f64>> = quantized
        .iter()
        .map(|(name, table)| (name.clone(), table.dequantize()))
        .collect();
    Ok((model.with_tables(&dequantized)?, quantized))
}

/// Per-mode medians over the benchmark corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeStats {
    pub median_ms: f64,
    pub median_target_calls: f64,
}

/// Baseline vs. speculative accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n: usize,
    pub baseline: ModeStats,
    pub speculative: ModeStats,
    /// 100 · (1 − speculative median calls / baseline median calls).
    pub reduction_pct: f64,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

/// Runs both decode modes over every input (segmenting documents that
/// exceed the largest bucket) and reports median wall time, median
/// target-call count, and the relative call reduction.
pub fn bench(model: &dyn TargetModel, inputs: &[String], cfg: &ServingConfig) -> Result<BenchReport> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut base_calls = Vec::with_capacity(inputs.len());
    let mut base_ms = Vec::with_capacity(inputs.len());
    let mut spec_calls = Vec::with_capacity(inputs.len());
    let mut spec_ms = Vec::with_capacity(inputs.len());
    for (i, input) in inputs.iter().enumerate() {
        let seg = segment(input, cfg)?;
        let mut calls_a = 0usize;
        let mut calls_s = 0usize;
        let mut ms_a = 0.0;
        let mut ms_s = 0.0;
        for (si, piece) in seg.segments.iter().enumerate() {
            let tokens = model.encode(&piece.text);
            let seed = derive_seed(derive_seed(cfg.seed, i as u64), si as u64);

            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let started = Instant::now();
            let (_, calls) = autoregressive_decode(model, &tokens, cfg, &mut rng)?;
            ms_a += started.elapsed().as_secs_f64() * 1e3;
            calls_a += calls;

            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (_, trace) = speculative_decode(model, &tokens, cfg, &mut rng)?;
            ms_s += trace.wall_time_ms;
            calls_s += trace.total_target_calls;
        }
        base_calls.push(calls_a as f64);
        base_ms.push(ms_a);
        spec_calls.push(calls_s as f64);
        spec_ms.push(ms_s);
    }
    let baseline = ModeStats {
        median_ms: median(&mut base_ms),
        median_target_calls: median(&mut base_calls),
    };
    let speculative = ModeStats {
        median_ms: median(&mut spec_ms),
        median_target_calls: median(&mut spec_calls),
    };
    let reduction_pct = if baseline.median_target_calls > 0.0 {
        100.0 * (1.0 - speculative.median_target_calls / baseline.median_target_calls)
    } else {
        0.0
    };
    Ok(BenchReport { n: inputs.len(), baseline, speculative, reduction_pct })
}
