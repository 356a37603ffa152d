//! Keyboard geometry and the Gaussian spatial touch model.
//!
//! Coordinates are in key-width units with the origin at the top-left key's
//! top-left corner. The spatial model is used both to synthesize positional
//! typing errors and to score touch likelihoods during decoding.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default isotropic standard deviation, in key widths.
///
/// Calibrated offline (see `calibrate_sigma`) so that literal nearest-key
/// decoding of English text misdecodes roughly 8% of letters, matching
/// observed per-letter error rates of undecoded touch typing.
pub const DEFAULT_SIGMA: f64 = 0.262569;

/// A single key: center position and size, in key-width units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Key {
    pub ch: char,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// One 2-D touch location in keyboard coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TouchPoint {
    pub x: f64,
    pub y: f64,
}

impl TouchPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn dist2(&self, other: TouchPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// One event in a touch stream: a key touch, or a character with no key
/// that passes through decoding verbatim.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TouchEvent {
    /// A sampled touch. `uppercase` marks characters that were case-folded
    /// for synthesis; case is restored after decoding.
    Key { point: TouchPoint, uppercase: bool },
    /// A character with no key on the layout.
    Literal(char),
}

/// Ordered sequence of touch events for a span of text.
pub type TouchSequence = Vec<TouchEvent>;

/// Characters every layout must provide a key for.
const REQUIRED_CHARS: &str = "abcdefghijklmnopqrstuvwxyz0123456789 '.,";

/// A keyboard layout: one key per supported character.
#[derive(Debug, Clone)]
pub struct KeyboardLayout {
    name: String,
    keys: BTreeMap<char, Key>,
}

#[derive(Serialize, Deserialize)]
struct LayoutFile {
    name: String,
    keys: Vec<KeyFile>,
}

#[derive(Serialize, Deserialize)]
struct KeyFile {
    ch: String,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl KeyboardLayout {
    /// Builds a layout, validating the structural invariants: the required
    /// character set is covered, centers are unique, sizes positive.
    pub fn new(name: impl Into<String>, keys: Vec<Key>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for key in keys {
            if !(key.w > 0.0 && key.h > 0.0 && key.w.is_finite() && key.h.is_finite()) {
                return Err(Error::Layout(format!(
                    "key {:?} has non-positive size",
                    key.ch
                )));
            }
            if !(key.x.is_finite() && key.y.is_finite()) {
                return Err(Error::Layout(format!(
                    "key {:?} has non-finite center",
                    key.ch
                )));
            }
            if map.insert(key.ch, key).is_some() {
                return Err(Error::Layout(format!("duplicate key for {:?}", key.ch)));
            }
        }
        for ch in REQUIRED_CHARS.chars() {
            if !map.contains_key(&ch) {
                return Err(Error::Layout(format!("missing required key {ch:?}")));
            }
        }
        let mut centers: Vec<(u64, u64)> = map
            .values()
            .map(|k| (k.x.to_bits(), k.y.to_bits()))
            .collect();
        centers.sort_unstable();
        centers.dedup();
        if centers.len() != map.len() {
            return Err(Error::Layout("two keys share a center".into()));
        }
        Ok(Self {
            name: name.into(),
            keys: map,
        })
    }

    /// The built-in US QWERTY layout: unit keys, rows 1 and 2 staggered by
    /// 0.25 and 0.75 key widths, a 5-unit space bar on row 3, digits below.
    pub fn qwerty() -> Self {
        let mut keys = Vec::new();
        let mut row = |chars: &str, x0: f64, y: f64| {
            for (i, ch) in chars.chars().enumerate() {
                keys.push(Key {
                    ch,
                    x: x0 + i as f64,
                    y,
                    w: 1.0,
                    h: 1.0,
                });
            }
        };
        row("qwertyuiop", 0.5, 0.5);
        row("asdfghjkl", 0.75, 1.5);
        row("zxcvbnm", 1.25, 2.5);
        row("1234567890", 0.5, 4.5);
        for (ch, x, w) in [('\'', 1.0, 1.0), (',', 2.0, 1.0), (' ', 5.0, 5.0), ('.', 8.0, 1.0)] {
            keys.push(Key {
                ch,
                x,
                y: 3.5,
                w,
                h: 1.0,
            });
        }
        Self::new("qwerty-us", keys).expect("built-in layout is valid")
    }

    /// Loads a layout from the JSON schema
    /// `{"name": str, "keys": [{"ch": str, "x": num, "y": num, "w": num, "h": num}]}`.
    pub fn from_json(json: &str) -> Result<Self> {
        let file: LayoutFile = serde_json::from_str(json)?;
        let mut keys = Vec::with_capacity(file.keys.len());
        for k in file.keys {
            let mut chars = k.ch.chars();
            let ch = chars
                .next()
                .ok_or_else(|| Error::Layout("empty \"ch\" field".into()))?;
            if chars.next().is_some() {
                return Err(Error::Layout(format!(
                    "\"ch\" must be a single character, got {:?}",
                    k.ch
                )));
            }
            keys.push(Key {
                ch,
                x: k.x,
                y: k.y,
                w: k.w,
                h: k.h,
            });
        }
        Self::new(file.name, keys)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn contains(&self, ch: char) -> bool {
        self.keys.contains_key(&ch)
    }

    /// Characters with keys, in codepoint order.
    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.keys.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Center of the key for `ch`.
    pub fn key_center(&self, ch: char) -> Result<TouchPoint> {
        self.keys
            .get(&ch)
            .map(|k| TouchPoint::new(k.x, k.y))
            .ok_or(Error::UnknownCharacter(ch))
    }

    /// The character whose key center is closest to `p` in Euclidean
    /// distance; ties break toward the lowest codepoint.
    pub fn nearest_key(&self, p: TouchPoint) -> char {
        debug_assert!(!self.keys.is_empty());
        let mut best = '\0';
        let mut best_d = f64::INFINITY;
        for (&ch, key) in &self.keys {
            let d = p.dist2(TouchPoint::new(key.x, key.y));
            if d < best_d {
                best_d = d;
                best = ch;
            }
        }
        best
    }
}

/// Bivariate Gaussian touch model over a keyboard layout.
///
/// Immutable after construction; all operations are pure given an explicit
/// RNG, so values can be shared freely across threads.
#[derive(Debug, Clone)]
pub struct SpatialModel {
    sigma_x: f64,
    sigma_y: f64,
    layout: Arc<KeyboardLayout>,
}

impl SpatialModel {
    /// `sigma` values must be finite and non-negative; zero selects the
    /// degenerate noise-free model used by deterministic tests.
    pub fn new(layout: Arc<KeyboardLayout>, sigma_x: f64, sigma_y: f64) -> Result<Self> {
        if !(sigma_x >= 0.0 && sigma_y >= 0.0 && sigma_x.is_finite() && sigma_y.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma must be finite and >= 0, got ({sigma_x}, {sigma_y})"
            )));
        }
        Ok(Self {
            sigma_x,
            sigma_y,
            layout,
        })
    }

    pub fn isotropic(layout: Arc<KeyboardLayout>, sigma: f64) -> Result<Self> {
        Self::new(layout, sigma, sigma)
    }

    /// QWERTY layout with the shipped calibrated sigma.
    pub fn default_qwerty() -> Self {
        Self::isotropic(Arc::new(KeyboardLayout::qwerty()), DEFAULT_SIGMA)
            .expect("default sigma is valid")
    }

    pub fn layout(&self) -> &Arc<KeyboardLayout> {
        &self.layout
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigma_x
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }

    /// Same layout, different isotropic sigma.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::isotropic(Arc::clone(&self.layout), sigma)
    }

    /// Samples a touch for `ch`: key center plus Gaussian noise.
    pub fn sample_touch<R: Rng + ?Sized>(&self, ch: char, rng: &mut R) -> Result<TouchPoint> {
        let c = self.layout.key_center(ch)?;
        Ok(self.sample_touch_at(c, rng))
    }

    /// Samples a touch around an arbitrary anchor point.
    pub fn sample_touch_at<R: Rng + ?Sized>(&self, anchor: TouchPoint, rng: &mut R) -> TouchPoint {
        if self.sigma_x == 0.0 && self.sigma_y == 0.0 {
            return anchor;
        }
        let nx = Normal::new(0.0, self.sigma_x).expect("validated sigma");
        let ny = Normal::new(0.0, self.sigma_y).expect("validated sigma");
        TouchPoint::new(anchor.x + nx.sample(rng), anchor.y + ny.sample(rng))
    }

    /// Log-density of the touch `p` under the Gaussian centered on `ch`'s
    /// key, dropping the normalization constant shared by all keys.
    ///
    /// With sigma zero the model is a point mass: 0 at the exact center,
    /// negative infinity elsewhere.
    pub fn touch_log_likelihood(&self, p: TouchPoint, ch: char) -> Result<f64> {
        let c = self.layout.key_center(ch)?;
        if self.sigma_x == 0.0 || self.sigma_y == 0.0 {
            return Ok(if p == c { 0.0 } else { f64::NEG_INFINITY });
        }
        let zx = (p.x - c.x) / self.sigma_x;
        let zy = (p.y - c.y) / self.sigma_y;
        Ok(-0.5 * (zx * zx + zy * zy))
    }
}

/// Fraction of letters `a-z` in `text` whose sampled touch decodes to a
/// different key under literal nearest-key decoding.
///
/// Uppercase letters are folded to lowercase before sampling. Non-letter
/// characters do not count toward the rate.
pub fn literal_error_rate<R: Rng + ?Sized>(model: &SpatialModel, text: &str, rng: &mut R) -> f64 {
    let mut letters = 0u64;
    let mut errors = 0u64;
    for ch in text.chars() {
        let folded = ch.to_ascii_lowercase();
        if !folded.is_ascii_lowercase() {
            continue;
        }
        let touch = model
            .sample_touch(folded, rng)
            .expect("letters are on every layout");
        letters += 1;
        if model.layout.nearest_key(touch) != folded {
            errors += 1;
        }
    }
    if letters == 0 {
        0.0
    } else {
        errors as f64 / letters as f64
    }
}

/// Finds the isotropic sigma whose literal per-letter error rate on `text`
/// hits `target_rate`, by bisection over a Monte-Carlo estimate.
///
/// Each candidate sigma is evaluated with an identically seeded RNG, which
/// makes the estimated rate exactly monotone in sigma and the bisection
/// stable.
pub fn calibrate_sigma(
    layout: Arc<KeyboardLayout>,
    text: &str,
    target_rate: f64,
    seed: u64,
) -> Result<f64> {
    use rand::SeedableRng;
    if !(0.0..1.0).contains(&target_rate) {
        return Err(Error::InvalidConfig(format!(
            "target error rate must be in [0, 1), got {target_rate}"
        )));
    }
    let mut lo = 0.01_f64;
    let mut hi = 1.5_f64;
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let model = SpatialModel::isotropic(Arc::clone(&layout), mid)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rate = literal_error_rate(&model, text, &mut rng);
        if rate < target_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn qwerty() -> Arc<KeyboardLayout> {
        Arc::new(KeyboardLayout::qwerty())
    }

    #[test]
    fn key_centers_match_grid_convention() {
        let layout = KeyboardLayout::qwerty();
        assert_eq!(layout.key_center('q').unwrap(), TouchPoint::new(0.5, 0.5));
        assert_eq!(layout.key_center('a').unwrap(), TouchPoint::new(0.75, 1.5));
        assert_eq!(layout.key_center(' ').unwrap(), TouchPoint::new(5.0, 3.5));
    }

    #[test]
    fn unknown_character_is_an_error() {
        let layout = KeyboardLayout::qwerty();
        assert!(matches!(
            layout.key_center('€'),
            Err(Error::UnknownCharacter('€'))
        ));
    }

    #[test]
    fn sigma_zero_touch_is_exact_center() {
        let model = SpatialModel::isotropic(qwerty(), 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = model.sample_touch('h', &mut rng).unwrap();
        assert_eq!(p, model.layout().key_center('h').unwrap());
    }

    #[test]
    fn sample_touch_is_deterministic_per_seed() {
        let model = SpatialModel::default_qwerty();
        let mut a = ChaCha8Rng::seed_from_u64(99);
        let mut b = ChaCha8Rng::seed_from_u64(99);
        for ch in "hello world".chars().filter(|c| *c != ' ') {
            assert_eq!(
                model.sample_touch(ch, &mut a).unwrap(),
                model.sample_touch(ch, &mut b).unwrap()
            );
        }
    }

    #[test]
    fn nearest_key_center_roundtrip() {
        let layout = KeyboardLayout::qwerty();
        for ch in layout.chars().collect::<Vec<_>>() {
            let c = layout.key_center(ch).unwrap();
            assert_eq!(layout.nearest_key(c), ch, "roundtrip failed for {ch:?}");
        }
    }

    #[test]
    fn nearest_key_tie_breaks_by_codepoint() {
        let layout = KeyboardLayout::qwerty();
        let h = layout.key_center('h').unwrap();
        let j = layout.key_center('j').unwrap();
        let mid = TouchPoint::new(0.5 * (h.x + j.x), 0.5 * (h.y + j.y));
        assert_eq!(layout.nearest_key(mid), 'h');
    }

    #[test]
    fn nearest_key_small_offset_stays() {
        let layout = KeyboardLayout::qwerty();
        let j = layout.key_center('j').unwrap();
        let k = layout.key_center('k').unwrap();
        let p = TouchPoint::new(j.x + 0.1 * (k.x - j.x), j.y + 0.1 * (k.y - j.y));
        assert_eq!(layout.nearest_key(p), 'j');
    }

    #[test]
    fn log_likelihood_peaks_at_own_center() {
        let model = SpatialModel::default_qwerty();
        let p = model.layout().key_center('g').unwrap();
        let own = model.touch_log_likelihood(p, 'g').unwrap();
        for ch in model.layout().chars().collect::<Vec<_>>() {
            assert!(own >= model.touch_log_likelihood(p, ch).unwrap());
        }
    }

    #[test]
    fn log_likelihood_symmetric_between_equidistant_keys() {
        let model = SpatialModel::default_qwerty();
        let h = model.layout().key_center('h').unwrap();
        let j = model.layout().key_center('j').unwrap();
        let mid = TouchPoint::new(0.5 * (h.x + j.x), 0.5 * (h.y + j.y));
        let lh = model.touch_log_likelihood(mid, 'h').unwrap();
        let lj = model.touch_log_likelihood(mid, 'j').unwrap();
        assert!((lh - lj).abs() < 1e-12);
    }

    /// Oracle: full normalized bivariate Gaussian density, computed
    /// independently of `touch_log_likelihood`.
    fn density(p: TouchPoint, center: TouchPoint, sx: f64, sy: f64) -> f64 {
        let zx = (p.x - center.x) / sx;
        let zy = (p.y - center.y) / sy;
        (-0.5 * (zx * zx + zy * zy)).exp() / (2.0 * std::f64::consts::PI * sx * sy)
    }

    #[test]
    fn likelihood_ranking_matches_density_oracle() {
        let model = SpatialModel::new(qwerty(), 0.31, 0.24).unwrap();
        let layout = model.layout();
        for p in [
            TouchPoint::new(3.1, 1.2),
            TouchPoint::new(0.2, 0.9),
            TouchPoint::new(6.6, 2.4),
            TouchPoint::new(5.0, 3.1),
        ] {
            let mut by_ll: Vec<char> = ('a'..='z').collect();
            by_ll.sort_by(|&a, &b| {
                let la = model.touch_log_likelihood(p, a).unwrap();
                let lb = model.touch_log_likelihood(p, b).unwrap();
                lb.partial_cmp(&la).unwrap().then(a.cmp(&b))
            });
            let mut by_density: Vec<char> = ('a'..='z').collect();
            by_density.sort_by(|&a, &b| {
                let da = density(p, layout.key_center(a).unwrap(), 0.31, 0.24);
                let db = density(p, layout.key_center(b).unwrap(), 0.31, 0.24);
                db.partial_cmp(&da).unwrap().then(a.cmp(&b))
            });
            assert_eq!(by_ll, by_density, "ranking diverged at {p:?}");
        }
    }

    #[test]
    fn layout_json_roundtrip() {
        let json = r#"{"name":"tiny-test","keys":[
            {"ch":"q","x":0.5,"y":0.5,"w":1.0,"h":1.0}
        ]}"#;
        // Missing required keys must be rejected.
        assert!(matches!(
            KeyboardLayout::from_json(json),
            Err(Error::Layout(_))
        ));

        let qwerty = KeyboardLayout::qwerty();
        let file = LayoutFile {
            name: qwerty.name().to_string(),
            keys: qwerty
                .keys
                .values()
                .map(|k| KeyFile {
                    ch: k.ch.to_string(),
                    x: k.x,
                    y: k.y,
                    w: k.w,
                    h: k.h,
                })
                .collect(),
        };
        let loaded = KeyboardLayout::from_json(&serde_json::to_string(&file).unwrap()).unwrap();
        assert_eq!(loaded.len(), qwerty.len());
        assert_eq!(
            loaded.key_center('m').unwrap(),
            qwerty.key_center('m').unwrap()
        );
    }

    #[test]
    fn duplicate_centers_rejected() {
        let mut keys: Vec<Key> = KeyboardLayout::qwerty().keys.values().copied().collect();
        let q = keys.iter().position(|k| k.ch == 'q').unwrap();
        let w = keys.iter().position(|k| k.ch == 'w').unwrap();
        keys[w].x = keys[q].x;
        keys[w].y = keys[q].y;
        assert!(matches!(
            KeyboardLayout::new("dup", keys),
            Err(Error::Layout(_))
        ));
    }

    proptest! {
        /// Isotropic case: argmax of the touch likelihood equals nearest key.
        #[test]
        fn isotropic_argmax_is_nearest(x in -1.0f64..11.0, y in -1.0f64..6.0) {
            let model = SpatialModel::isotropic(qwerty(), 0.3).unwrap();
            let p = TouchPoint::new(x, y);
            let nearest = model.layout().nearest_key(p);
            let best = model
                .layout()
                .chars()
                .max_by(|&a, &b| {
                    let la = model.touch_log_likelihood(p, a).unwrap();
                    let lb = model.touch_log_likelihood(p, b).unwrap();
                    la.partial_cmp(&lb).unwrap().then(b.cmp(&a))
                })
                .unwrap();
            prop_assert_eq!(best, nearest);
        }
    }
}
