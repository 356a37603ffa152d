//! Autoregressive and input-as-draft speculative decoding.
//!
//! The draft at each step is the unconsumed suffix of the input being
//! proofread, so a copy-dominant target accepts long runs. Acceptance
//! follows the standard verify/resample rule against an ε-smoothed
//! point-mass proposal, which preserves the target's output distribution;
//! greedy mode accepts while the draft token equals the argmax.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::serving::model::TargetModel;
use crate::serving::{pad_to_bucket, ServingConfig};

/// Point-mass smoothing: the draft proposal keeps 1−ε on the draft token
/// and spreads ε uniformly, so acceptance ratios stay well-defined.
const SMOOTHING_EPS: f64 = 1e-6;
/// How far ahead a resampled token is searched for in the input when
/// realigning the draft cursor.
const ANCHOR_WINDOW: usize = 4;

/// One verification pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub draft_len: usize,
    pub accepted_len: usize,
    /// Token emitted by the target beyond the accepted draft prefix: the
    /// residual resample on rejection, or the bonus token on full
    /// acceptance. Absent only when decoding stopped inside the draft.
    pub resampled_token: Option<u32>,
}

/// Full speculative-decoding account for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecDecodeTrace {
    pub steps: Vec<StepRecord>,
    pub total_target_calls: usize,
    pub total_tokens: usize,
    pub wall_time_ms: f64,
}

impl SpecDecodeTrace {
    /// Σ(accepted + resampled) must cover every emitted token.
    pub fn check_conservation(&self) -> bool {
        let counted: usize = self
            .steps
            .iter()
            .map(|s| s.accepted_len + usize::from(s.resampled_token.is_some()))
            .sum();
        counted == self.total_tokens
            && self.steps.iter().all(|s| s.accepted_len <= s.draft_len)
    }
}

fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let t = temperature.max(f64::MIN_POSITIVE);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&l| ((l - max) / t).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    probs
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn greedy_mode(cfg: &ServingConfig) -> bool {
    cfg.greedy || cfg.temperature == 0.0
}

fn pick<R: Rng + ?Sized>(logits: &[f64], cfg: &ServingConfig, rng: &mut R) -> u32 {
    if greedy_mode(cfg) {
        argmax(logits) as u32
    } else {
        sample_index(&softmax(logits, cfg.temperature), rng) as u32
    }
}

/// Emission cap: proofreading output scales with its input, so anything
/// past this is a runaway model.
fn emission_cap(input_len: usize) -> usize {
    2 * input_len + 16
}

/// Token-by-token baseline. One target call per emitted token; output
/// includes the terminating EOS (or is cut at the emission cap).
pub fn autoregressive_decode<R: Rng + ?Sized>(
    model: &dyn TargetModel,
    input_tokens: &[u32],
    cfg: &ServingConfig,
    rng: &mut R,
) -> Result<(Vec<u32>, usize)> {
    cfg.validate()?;
    let conditioning = pad_to_bucket(input_tokens, cfg, model)?;
    let cap = emission_cap(input_tokens.len());
    let mut out = Vec::new();
    let mut calls = 0usize;
    loop {
        let logits = model.next_token_logits(&out, &conditioning);
        calls += 1;
        let token = pick(&logits, cfg, rng);
        out.push(token);
        if token == model.eos_token() || out.len() >= cap {
            return Ok((out, calls));
        }
    }
}

/// Speculative decoding with the input suffix as draft.
///
/// Each verification pass counts one target call; it yields the accepted
/// draft prefix plus one target-sampled token (residual resample on
/// rejection, bonus token on full acceptance). The emitted token stream
/// is distributed exactly as autoregressive decoding — token-identical in
/// greedy mode.
pub fn speculative_decode<R: Rng + ?Sized>(
    model: &dyn TargetModel,
    input_tokens: &[u32],
    cfg: &ServingConfig,
    rng: &mut R,
) -> Result<(Vec<u32>, SpecDecodeTrace)> {
    cfg.validate()?;
    let started = Instant::now();
    let conditioning = pad_to_bucket(input_tokens, cfg, model)?;
    let cap = emission_cap(input_tokens.len());
    let eos = model.eos_token();
    let vocab_size = model.vocab_size().max(1) as f64;
    let greedy = greedy_mode(cfg);

    let mut out: Vec<u32> = Vec::new();
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut calls = 0usize;
    let mut cursor = 0usize; // first unconsumed input token
    let mut done = false;

    while !done {
        let draft_end = (cursor + cfg.max_draft_len).min(input_tokens.len());
        let draft = &input_tokens[cursor..cursor.max(draft_end)];
        // One parallel target pass scores every draft position plus the
        // position after it; we count it as a single call.
        calls += 1;
        let mut accepted = 0usize;
        let mut resampled: Option<u32> = None;

        for &d in draft {
            let logits = model.next_token_logits(&out, &conditioning);
            if greedy {
                let best = argmax(&logits) as u32;
                if best == d {
                    out.push(d);
                    accepted += 1;
                } else {
                    out.push(best);
                    resampled = Some(best);
                    break;
                }
            } else {
                let probs = softmax(&logits, cfg.temperature);
                let q_draft = (1.0 - SMOOTHING_EPS) + SMOOTHING_EPS / vocab_size;
                let p_draft = probs.get(d as usize).copied().unwrap_or(0.0);
                if rng.random::<f64>() < (p_draft / q_draft).min(1.0) {
                    out.push(d);
                    accepted += 1;
                } else {
                    // Residual distribution max(0, p − q), renormalized.
                    let mut residual: Vec<f64> = probs
                        .iter()
                        .enumerate()
                        .map(|(i, &p)| {
                            let q = if i == d as usize {
                                q_draft
                            } else {
                                SMOOTHING_EPS / vocab_size
                            };
                            (p - q).max(0.0)
                        })
                        .collect();
                    let mass: f64 = residual.iter().sum();
                    let token = if mass > 0.0 {
                        for r in &mut residual {
                            *r /= mass;
                        }
                        sample_index(&residual, rng) as u32
                    } else {
                        // p ≡ q: any sample from p is valid.
                        sample_index(&probs, rng) as u32
                    };
                    out.push(token);
                    resampled = Some(token);
                    break;
                }
            }
            if out.last() == Some(&eos) || out.len() >= cap {
                done = true;
                break;
            }
        }

        // Bonus token: the verification pass already computed the
        // distribution after the accepted prefix.
        if !done && resampled.is_none() && out.len() < cap {
            let logits = model.next_token_logits(&out, &conditioning);
            let token = pick(&logits, cfg, rng);
            out.push(token);
            resampled = Some(token);
        }

        cursor += accepted;
        if let Some(token) = resampled {
            if token == eos || out.len() >= cap {
                done = true;
            } else {
                // Realign: if the emitted token appears just ahead in the
                // input, the draft resumes past it; otherwise treat it as
                // a substitution for the next input token.
                let window_end = (cursor + ANCHOR_WINDOW).min(input_tokens.len());
                match input_tokens[cursor..window_end]
                    .iter()
                    .position(|&t| t == token)
                {
                    Some(offset) => cursor += offset + 1,
                    None => cursor = (cursor + 1).min(input_tokens.len()),
                }
            }
        } else if out.len() >= cap {
            done = true;
        }

        steps.push(StepRecord {
            draft_len: draft.len(),
            accepted_len: accepted,
            resampled_token: resampled,
        });
    }

    let trace = SpecDecodeTrace {
        steps,
        total_target_calls: calls,
        total_tokens: out.len(),
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    Ok((out, trace))
}
