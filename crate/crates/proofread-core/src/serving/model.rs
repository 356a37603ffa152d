//! Target-model interface and the edit-channel reference model.
//!
//! The serving simulator works on whitespace word tokens. A target model
//! owns its token table; [`EditChannelModel`] is the high-copy-rate
//! reference target: it echoes its conditioning input token-for-token and
//! substitutes a vocabulary word where the noisy-channel score says the
//! input token is a corruption.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::text::levenshtein;
use crate::vocab::Vocabulary;

pub const PAD_TOKEN: u32 = 0;
pub const EOS_TOKEN: u32 = 1;
pub const UNK_TOKEN: u32 = 2;

/// Bonus added to the logit of the token the channel expects next; large
/// enough to dominate every unigram prior, so greedy decoding follows the
/// expected sequence exactly.
const COPY_LOGIT_BONUS: f64 = 12.0;
/// Log prior for interned tokens outside the vocabulary.
const EXTRA_TOKEN_LOG_PRIOR: f64 = -9.0;
const EOS_LOG_PRIOR: f64 = -12.0;
const PAD_LOG_PRIOR: f64 = -30.0;
/// Per-edit cost when scoring correction candidates, matching the
/// decoder's indel penalty.
const EDIT_COST: f64 = 6.0;
/// Pseudo-count for copying a token that is not in the vocabulary.
const OOV_PSEUDO_COUNT: f64 = 0.01;

/// A served model: next-token logits conditioned on the (padded) input
/// being proofread, plus named parameter tables for quantization.
pub trait TargetModel: Send + Sync {
    fn vocab_size(&self) -> usize;
    fn pad_token(&self) -> u32;
    fn eos_token(&self) -> u32;
    /// Whitespace tokenization into this model's token ids.
    fn encode(&self, text: &str) -> Vec<u32>;
    /// Inverse of [`encode`] up to whitespace (single spaces, EOS stops).
    fn decode_text(&self, tokens: &[u32]) -> String;
    /// Logits over the full token table for the position `prefix.len()`.
    fn next_token_logits(&self, prefix: &[u32], conditioning: &[u32]) -> Vec<f64>;
    /// Named real-valued tables backing the model.
    fn parameter_tables(&self) -> BTreeMap<String, Vec<f64>>;
    /// The same model with its tables replaced (e.g. after quantization).
    fn with_tables(&self, tables: &BTreeMap<String, Vec<f64>>) -> Result<Box<dyn TargetModel>>;
}

/// Reference target model: copies conditioning tokens, emitting the
/// noisy-channel correction where one clearly beats copying.
#[derive(Debug, Clone)]
pub struct EditChannelModel {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    unigram_log_prior: Vec<f64>,
    /// Per token id: the id this token emits when it appears in the
    /// conditioning input (itself, unless a correction wins).
    correction: Vec<u32>,
    copy_logit_bonus: f64,
}

impl EditChannelModel {
    /// Builds the token table from the vocabulary plus every whitespace
    /// token of `texts` (the corpus the model will be asked to proofread).
    pub fn new(vocab: &Arc<Vocabulary>, texts: &[String]) -> Self {
        let mut tokens: Vec<String> =
            vec!["<pad>".into(), "<eos>".into(), "<unk>".into()];
        let mut index: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let intern = |tok: &str, tokens: &mut Vec<String>, index: &mut HashMap<String, u32>| {
            if !index.contains_key(tok) {
                index.insert(tok.to_string(), tokens.len() as u32);
                tokens.push(tok.to_string());
            }
        };
        for (word, _) in vocab.words() {
            intern(word, &mut tokens, &mut index);
        }
        for text in texts {
            for tok in text.split_whitespace() {
                intern(tok, &mut tokens, &mut index);
            }
        }

        let total = vocab.total().max(1) as f64;
        let oov_floor = (OOV_PSEUDO_COUNT / total).ln();
        let mut unigram_log_prior = Vec::with_capacity(tokens.len());
        let mut correction = Vec::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            let id = id as u32;
            if id == PAD_TOKEN {
                unigram_log_prior.push(PAD_LOG_PRIOR);
                correction.push(id);
                continue;
            }
            if id == EOS_TOKEN {
                unigram_log_prior.push(EOS_LOG_PRIOR);
                correction.push(id);
                continue;
            }
            let lower = tok.to_lowercase();
            let prior = vocab
                .log_prior(&lower)
                .unwrap_or(EXTRA_TOKEN_LOG_PRIOR);
            unigram_log_prior.push(prior);

            if id == UNK_TOKEN || vocab.contains(&lower) {
                correction.push(id);
                continue;
            }
            // Noisy-channel pick: prior − EDIT_COST·distance, against the
            // OOV floor for copying the token unchanged.
            let mut best: Option<(f64, &str)> = None;
            for (cand, count) in vocab.candidates_within(&lower, 2) {
                let score = (count as f64 / total).ln()
                    - EDIT_COST * levenshtein(&lower, cand) as f64;
                let better = match best {
                    None => true,
                    Some((s, w)) => score > s || (score == s && cand < w),
                };
                if better {
                    best = Some((score, cand));
                }
            }
            match best {
                Some((score, word)) if score > oov_floor => {
                    correction.push(index[word]);
                }
                _ => correction.push(id),
            }
        }

        Self {
            tokens,
            index,
            unigram_log_prior,
            correction,
            copy_logit_bonus: COPY_LOGIT_BONUS,
        }
    }

    /// Conditioning length with trailing bucket padding excluded.
    fn effective_len(&self, conditioning: &[u32]) -> usize {
        conditioning
            .iter()
            .position(|&t| t == PAD_TOKEN)
            .unwrap_or(conditioning.len())
    }

    /// The token the channel expects at output position `pos`.
    pub fn expected_token(&self, pos: usize, conditioning: &[u32]) -> u32 {
        let eff = self.effective_len(conditioning);
        if pos < eff {
            let src = conditioning[pos] as usize;
            self.correction.get(src).copied().unwrap_or(UNK_TOKEN)
        } else {
            EOS_TOKEN
        }
    }

    pub fn token_text(&self, id: u32) -> &str {
        self.tokens
            .get(id as usize)
            .map(String::as_str)
            .unwrap_or("<unk>")
    }
}

impl TargetModel for EditChannelModel {
    fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    fn pad_token(&self) -> u32 {
        PAD_TOKEN
    }

    fn eos_token(&self) -> u32 {
        EOS_TOKEN
    }

    fn encode(&self, text: &str) -> Vec<u32> {
        text.split_whitespace()
            .map(|tok| self.index.get(tok).copied().unwrap_or(UNK_TOKEN))
            .collect()
    }

    fn decode_text(&self, tokens: &[u32]) -> String {
        let mut words = Vec::new();
        for &t in tokens {
            if t == EOS_TOKEN {
                break;
            }
            if t == PAD_TOKEN {
                continue;
            }
            words.push(self.token_text(t));
        }
        words.join(" ")
    }

    fn next_token_logits(&self, prefix: &[u32], conditioning: &[u32]) -> Vec<f64> {
        let mut logits = self.unigram_log_prior.clone();
        let expected = self.expected_token(prefix.len(), conditioning) as usize;
        logits[expected] += self.copy_logit_bonus;
        logits
    }

    fn parameter_tables(&self) -> BTreeMap<String, Vec<f64>> {
        let mut tables = BTreeMap::new();
        tables.insert("unigram_log_prior".to_string(), self.unigram_log_prior.clone());
        tables.insert("copy_logit_bonus".to_string(), vec![self.copy_logit_bonus]);
        tables
    }

    fn with_tables(&self, tables: &BTreeMap<String, Vec<f64>>) -> Result<Box<dyn TargetModel>> {
        let priors = tables
            .get("unigram_log_prior")
            .ok_or_else(|| Error::InvalidConfig("missing table unigram_log_prior".into()))?;
        let bonus = tables
            .get("copy_logit_bonus")
            .ok_or_else(|| Error::InvalidConfig("missing table copy_logit_bonus".into()))?;
        if priors.len() != self.unigram_log_prior.len() {
            return Err(Error::InvalidConfig(format!(
                "unigram_log_prior length {} != {}",
                priors.len(),
                self.unigram_log_prior.len()
            )));
        }
        if bonus.len() != 1 {
            return Err(Error::InvalidConfig("copy_logit_bonus must have length 1".into()));
        }
        let mut model = self.clone();
        model.unigram_log_prior = priors.clone();
        model.copy_logit_bonus = bonus[0];
        Ok(Box::new(model))
    }
}

/// Minimal target model with fixed logits per output position: test and
/// demo plumbing for the decoding/quantization machinery.
#[derive(Debug, Clone)]
pub struct StaticModel {
    /// One logit row per position; the last row repeats past the end.
    pub rows: Vec<Vec<f64>>,
    pub pad: u32,
    pub eos: u32,
}

impl StaticModel {
    pub fn new(rows: Vec<Vec<f64>>, pad: u32, eos: u32) -> Self {
        assert!(!rows.is_empty(), "StaticModel needs at least one row");
        let width = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == width));
        assert!((pad as usize) < width && (eos as usize) < width);
        Self { rows, pad, eos }
    }
}

impl TargetModel for StaticModel {
    fn vocab_size(&self) -> usize {
        self.rows[0].len()
    }

    fn pad_token(&self) -> u32 {
        self.pad
    }

    fn eos_token(&self) -> u32 {
        self.eos
    }

    fn encode(&self, text: &str) -> Vec<u32> {
        text.split_whitespace()
            .filter_map(|tok| tok.parse::<u32>().ok())
            .filter(|&t| (t as usize) < self.vocab_size())
            .collect()
    }

    fn decode_text(&self, tokens: &[u32]) -> String {
        tokens
            .iter()
            .take_while(|&&t| t != self.eos)
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn next_token_logits(&self, prefix: &[u32], _conditioning: &[u32]) -> Vec<f64> {
        let row = prefix.len().min(self.rows.len() - 1);
        self.rows[row].clone()
    }

    fn parameter_tables(&self) -> BTreeMap<String, Vec<f64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| (format!("row_{i}"), row.clone()))
            .collect()
    }

    fn with_tables(&self, tables: &BTreeMap<String, Vec<f64>>) -> Result<Box<dyn TargetModel>> {
        let mut model = self.clone();
        for (i, row) in model.rows.iter_mut().enumerate() {
            let replacement = tables
                .get(&format!("row_{i}"))
                .ok_or_else(|| Error::InvalidConfig(format!("missing table row_{i}")))?;
            if replacement.len() != row.len() {
                return Err(Error::InvalidConfig(format!("row_{i} length mismatch")));
            }
            *row = replacement.clone();
        }
        Ok(Box::new(model))
    }
}
