//! The six keyboard error operators and the seeded corruption pass.
//!
//! Clean text goes in, typo-laden text plus a replayable [`EditLog`] come
//! out. Each character gets exactly one categorical draw over
//! {six operators, no-op}, so operators never stack on a single character
//! and configured rates read directly as expected edit fractions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyboard::{SpatialModel, TouchPoint, DEFAULT_SIGMA};

/// One of the six keyboard-typo operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorOperator {
    /// Drop a character: "hello" → "hllo".
    Omission,
    /// Insert a keyboard-adjacent character: "hello" → "hpello".
    Insertion,
    /// Swap two adjacent characters: "hello" → "hlelo".
    Transposition,
    /// Emit a character twice: "hello" → "heello".
    DoubleTap,
    /// Collapse a doubled character: "hello" → "helo".
    OmitDouble,
    /// Replace with the nearest key to a noisy touch: "hello" → "jello".
    Positional,
}

pub const ALL_OPERATORS: [ErrorOperator; 6] = [
    ErrorOperator::Omission,
    ErrorOperator::Insertion,
    ErrorOperator::Transposition,
    ErrorOperator::DoubleTap,
    ErrorOperator::OmitDouble,
    ErrorOperator::Positional,
];

/// How the inserted character of [`ErrorOperator::Insertion`] is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertionMode {
    /// Sample a touch around the midpoint of the flanking key centers and
    /// commit its nearest key — inserts are keyboard-adjacent.
    #[default]
    Adjacent,
    /// Draw uniformly over the lowercase letters.
    Uniform,
}

/// Per-character operator probabilities plus the spatial noise level.
///
/// Fully determines the corruption process given a seed. Serializes to a
/// flat JSON object; the keyboard layout itself is supplied separately
/// (default QWERTY) so config files stay geometry-free.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionConfig {
    pub p_omit: f64,
    pub p_insert: f64,
    pub p_transpose: f64,
    pub p_double_tap: f64,
    pub p_omit_double: f64,
    pub p_positional: f64,
    /// Isotropic touch-noise standard deviation, key widths.
    pub sigma: f64,
    pub insertion_mode: InsertionMode,
    pub seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            p_omit: 0.01,
            p_insert: 0.01,
            p_transpose: 0.01,
            p_double_tap: 0.005,
            p_omit_double: 0.005,
            p_positional: 0.05,
            sigma: DEFAULT_SIGMA,
            insertion_mode: InsertionMode::Adjacent,
            seed: 0,
        }
    }
}

impl CorruptionConfig {
    /// Checks probability bounds and the categorical-sum constraint.
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_omit", self.p_omit),
            ("p_insert", self.p_insert),
            ("p_transpose", self.p_transpose),
            ("p_double_tap", self.p_double_tap),
            ("p_omit_double", self.p_omit_double),
            ("p_positional", self.p_positional),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} = {p} not in [0, 1]")));
            }
        }
        let sum: f64 = probs.iter().map(|(_, p)| p).sum();
        if sum > 1.0 + 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "operator probabilities sum to {sum} > 1"
            )));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::InvalidConfig(format!("sigma = {}", self.sigma)));
        }
        Ok(())
    }

    /// Sum of the six operator probabilities.
    pub fn total_rate(&self) -> f64 {
        self.p_omit
            + self.p_insert
            + self.p_transpose
            + self.p_double_tap
            + self.p_omit_double
            + self.p_positional
    }

    /// Spatial model over the default QWERTY layout at this config's sigma.
    pub fn spatial_model(&self) -> SpatialModel {
        SpatialModel::isotropic(crate::keyboard::KeyboardLayout::qwerty().into(), self.sigma)
            .expect("validated sigma")
    }
}

/// One applied operator: where it hit, what it consumed, what it emitted.
///
/// `position` is a char index into the source string. `original` is the
/// consumed source slice (empty for insertions); `emitted` is what replaced
/// it in the output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRecord {
    pub position: usize,
    pub operator: ErrorOperator,
    pub original: String,
    pub emitted: String,
}

/// Ordered list of [`EditRecord`]s; replaying it on the source string
/// reproduces the corrupted output byte-exactly.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditLog {
    pub records: Vec<EditRecord>,
}

impl EditLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Re-applies the log to `source`, reproducing the corrupted string.
    pub fn replay(&self, source: &str) -> Result<String> {
        let chars: Vec<char> = source.chars().collect();
        let mut out = String::with_capacity(source.len() + self.records.len());
        let mut i = 0usize;
        for rec in &self.records {
            if rec.position < i || rec.position > chars.len() {
                return Err(Error::Replay(format!(
                    "record position {} out of order (cursor {i}, len {})",
                    rec.position,
                    chars.len()
                )));
            }
            while i < rec.position {
                out.push(chars[i]);
                i += 1;
            }
            let consumed = rec.original.chars().count();
            let slice: String = chars[i..(i + consumed).min(chars.len())].iter().collect();
            if slice != rec.original {
                return Err(Error::Replay(format!(
                    "source mismatch at char {i}: log consumed {:?}, source has {slice:?}",
                    rec.original
                )));
            }
            out.push_str(&rec.emitted);
            i += consumed;
        }
        for &ch in &chars[i..] {
            out.push(ch);
        }
        Ok(out)
    }
}

/// Applies exactly one operator at `pos` (a char index) and returns the
/// edited text. Positional and insertion draws consume `rng`.
pub fn apply_operator<R: Rng + ?Sized>(
    op: ErrorOperator,
    text: &str,
    pos: usize,
    spatial: &SpatialModel,
    rng: &mut R,
) -> Result<String> {
    let chars: Vec<char> = text.chars().collect();
    let len = chars.len();
    let invalid = || Error::InvalidPosition { op, pos, len };

    let record = match op {
        ErrorOperator::Omission => {
            let &ch = chars.get(pos).ok_or_else(invalid)?;
            EditRecord {
                position: pos,
                operator: op,
                original: ch.to_string(),
                emitted: String::new(),
            }
        }
        ErrorOperator::Insertion => {
            if pos > len {
                return Err(invalid());
            }
            let prev = pos.checked_sub(1).and_then(|i| chars.get(i)).copied();
            let next = chars.get(pos).copied();
            let inserted =
                sample_insertion(spatial, prev, next, rng).ok_or_else(invalid)?;
            EditRecord {
                position: pos,
                operator: op,
                original: String::new(),
                emitted: inserted.to_string(),
            }
        }
        ErrorOperator::Transposition => {
            if pos + 1 >= len {
                return Err(invalid());
            }
            let (a, b) = (chars[pos], chars[pos + 1]);
            EditRecord {
                position: pos,
                operator: op,
                original: [a, b].iter().collect(),
                emitted: [b, a].iter().collect(),
            }
        }
        ErrorOperator::DoubleTap => {
            let &ch = chars.get(pos).ok_or_else(invalid)?;
            EditRecord {
                position: pos,
                operator: op,
                original: ch.to_string(),
                emitted: [ch, ch].iter().collect(),
            }
        }
        ErrorOperator::OmitDouble => {
            if pos + 1 >= len || chars[pos] != chars[pos + 1] {
                return Err(invalid());
            }
            let ch = chars[pos];
            EditRecord {
                position: pos,
                operator: op,
                original: [ch, ch].iter().collect(),
                emitted: ch.to_string(),
            }
        }
        ErrorOperator::Positional => {
            let &ch = chars.get(pos).ok_or_else(invalid)?;
            let emitted = positional_replacement(spatial, ch, rng)?;
            EditRecord {
                position: pos,
                operator: op,
                original: ch.to_string(),
                emitted: emitted.to_string(),
            }
        }
    };

    EditLog {
        records: vec![record],
    }
    .replay(text)
}

/// Nearest key to a noisy touch aimed at `ch`'s key.
fn positional_replacement<R: Rng + ?Sized>(
    spatial: &SpatialModel,
    ch: char,
    rng: &mut R,
) -> Result<char> {
    let touch = spatial.sample_touch(ch, rng)?;
    Ok(spatial.layout().nearest_key(touch))
}

/// Inserted character for the insertion operator: a touch sampled around
/// the midpoint of the flanking key centers (falling back to whichever
/// flank is on the layout), committed to its nearest key. Returns `None`
/// when neither flank has a key.
fn sample_insertion<R: Rng + ?Sized>(
    spatial: &SpatialModel,
    prev: Option<char>,
    next: Option<char>,
    rng: &mut R,
) -> Option<char> {
    let layout = spatial.layout();
    let a = prev.and_then(|c| layout.key_center(c).ok());
    let b = next.and_then(|c| layout.key_center(c).ok());
    let anchor = match (a, b) {
        (Some(a), Some(b)) => TouchPoint {
            x: (a.x + b.x) / 2.0,
            y: (a.y + b.y) / 2.0,
        },
        (Some(p), None) | (None, Some(p)) => p,
        (None, None) => return None,
    };
    let touch = spatial.sample_touch_at(anchor, rng);
    Some(layout.nearest_key(touch))
}

/// Corrupts `text` under `config` using `config.seed`.
pub fn corrupt(text: &str, config: &CorruptionConfig) -> (String, EditLog) {
    corrupt_seeded(text, config, config.seed)
}

/// Corrupts `text` with an explicit seed (e.g. a per-example derived
/// stream), ignoring `config.seed`.
///
/// Left-to-right single pass; one categorical draw per source character.
/// Characters with no key on the layout are copied through untouched.
/// Operators whose preconditions fail at a position (transposition at the
/// last character, omit-double without a doubled pair) fall back to no-op,
/// redistributing their mass.
pub fn corrupt_seeded(text: &str, config: &CorruptionConfig, seed: u64) -> (String, EditLog) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spatial = config.spatial_model();
    let layout = spatial.layout();
    let chars: Vec<char> = text.chars().collect();

    let mut out = String::with_capacity(text.len() + 8);
    let mut records = Vec::new();
    let mut i = 0usize;

    // Cumulative thresholds in field order.
    let c_omit = config.p_omit;
    let c_insert = c_omit + config.p_insert;
    let c_transpose = c_insert + config.p_transpose;
    let c_double = c_transpose + config.p_double_tap;
    let c_omit_double = c_double + config.p_omit_double;
    let c_positional = c_omit_double + config.p_positional;

    while i < chars.len() {
        let ch = chars[i];
        if !layout.contains(ch) {
            out.push(ch);
            i += 1;
            continue;
        }
        let u: f64 = rng.random();
        let next_on_layout = chars.get(i + 1).is_some_and(|&c| layout.contains(c));

        if u < c_omit {
            records.push(EditRecord {
                position: i,
                operator: ErrorOperator::Omission,
                original: ch.to_string(),
                emitted: String::new(),
            });
            i += 1;
        } else if u < c_insert {
            let prev = i.checked_sub(1).and_then(|j| chars.get(j)).copied();
            let inserted = match config.insertion_mode {
                InsertionMode::Adjacent => {
                    sample_insertion(&spatial, prev, Some(ch), &mut rng)
                        .expect("current char is on the layout")
                }
                InsertionMode::Uniform => (b'a' + rng.random_range(0..26u8)) as char,
            };
            records.push(EditRecord {
                position: i,
                operator: ErrorOperator::Insertion,
                original: String::new(),
                emitted: inserted.to_string(),
            });
            out.push(inserted);
            out.push(ch);
            i += 1;
        } else if u < c_transpose && next_on_layout {
            let next = chars[i + 1];
            records.push(EditRecord {
                position: i,
                operator: ErrorOperator::Transposition,
                original: [ch, next].iter().collect(),
                emitted: [next, ch].iter().collect(),
            });
            out.push(next);
            out.push(ch);
            i += 2;
        } else if u >= c_transpose && u < c_double {
            records.push(EditRecord {
                position: i,
                operator: ErrorOperator::DoubleTap,
                original: ch.to_string(),
                emitted: [ch, ch].iter().collect(),
            });
            out.push(ch);
            out.push(ch);
            i += 1;
        } else if u >= c_double && u < c_omit_double && chars.get(i + 1) == Some(&ch) {
            records.push(EditRecord {
                position: i,
                operator: ErrorOperator::OmitDouble,
                original: [ch, ch].iter().collect(),
                emitted: ch.to_string(),
            });
            out.push(ch);
            i += 2;
        } else if u >= c_omit_double && u < c_positional {
            let emitted = positional_replacement(&spatial, ch, &mut rng)
                .expect("current char is on the layout");
            records.push(EditRecord {
                position: i,
                operator: ErrorOperator::Positional,
                original: ch.to_string(),
                emitted: emitted.to_string(),
            });
            out.push(emitted);
            i += 1;
        } else {
            out.push(ch);
            i += 1;
        }
    }

    (out, EditLog { records })
}
