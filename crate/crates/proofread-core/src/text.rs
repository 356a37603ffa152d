//! Tokenization and string helpers shared across modules.

use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

/// A whitespace-delimited token plus the separator that follows it.
///
/// Concatenating `token + sep` over all entries (plus the leading separator
/// returned alongside) reproduces the original string byte-exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub sep: String,
}

/// Splits `text` into whitespace-delimited tokens, keeping separators.
///
/// Returns `(leading, tokens)` where `leading` is whitespace before the first
/// token. Lossless: `leading + Σ (token.text + token.sep) == text`.
pub fn split_tokens(text: &str) -> (String, Vec<Token>) {
    let mut leading = String::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut cur = String::new();
    let mut in_token = false;

    for ch in text.chars() {
        if ch.is_whitespace() {
            if in_token {
                tokens.push(Token {
                    text: std::mem::take(&mut cur),
                    sep: String::new(),
                });
                in_token = false;
            }
            match tokens.last_mut() {
                Some(tok) => tok.sep.push(ch),
                None => leading.push(ch),
            }
        } else {
            in_token = true;
            cur.push(ch);
        }
    }
    if in_token {
        tokens.push(Token {
            text: cur,
            sep: String::new(),
        });
    }
    (leading, tokens)
}

/// Rebuilds the original string from `split_tokens` output.
pub fn join_tokens(leading: &str, tokens: &[Token]) -> String {
    let mut out = String::from(leading);
    for t in tokens {
        out.push_str(&t.text);
        out.push_str(&t.sep);
    }
    out
}

/// Levenshtein distance over Unicode scalar values, unit costs.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j] + cost).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Normalizes for NEM comparison: lowercase, drop Unicode punctuation
/// (general category group P; symbols such as currency and math are kept),
/// collapse whitespace runs to one space, trim.
pub fn nem_normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.chars() {
        if ch.general_category_group() == GeneralCategoryGroup::Punctuation {
            continue;
        }
        if ch.is_whitespace() {
            pending_space = true;
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        for lc in ch.to_lowercase() {
            out.push(lc);
        }
    }
    out
}

/// SplitMix64 step; stable across platforms, used for seed derivation.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a per-item seed from a base seed and an item index.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index.wrapping_add(1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn split_preserves_bytes() {
        let s = "  hello  world\tfoo\n";
        let (leading, toks) = split_tokens(s);
        assert_eq!(leading, "  ");
        assert_eq!(toks.len(), 3);
        assert_eq!(toks[0].text, "hello");
        assert_eq!(join_tokens(&leading, &toks), s);
    }

    #[test]
    fn split_empty_and_all_space() {
        assert_eq!(split_tokens(""), (String::new(), vec![]));
        let (leading, toks) = split_tokens("   ");
        assert_eq!(leading, "   ");
        assert!(toks.is_empty());
    }

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein("hello", "hllo"), 1);
        assert_eq!(levenshtein("hello", "hlelo"), 2);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
    }

    #[test]
    fn nem_normalize_examples() {
        assert_eq!(nem_normalize("Good morning!"), "good morning");
        assert_eq!(nem_normalize("  How,  are   you? "), "how are you");
        // Currency/math symbols are kept, punctuation dropped.
        assert_eq!(nem_normalize("$5 + $2!"), "$5 + $2");
    }

    #[test]
    fn derive_seed_is_stable() {
        assert_eq!(derive_seed(1, 2), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 2), derive_seed(1, 3));
        assert_ne!(derive_seed(1, 2), derive_seed(2, 2));
    }

    proptest! {
        #[test]
        fn split_join_roundtrip(s in "\\PC*") {
            let (leading, toks) = split_tokens(&s);
            prop_assert_eq!(join_tokens(&leading, &toks), s);
        }

        #[test]
        fn levenshtein_symmetric(a in "[a-z]{0,12}", b in "[a-z]{0,12}") {
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
        }
    }
}
