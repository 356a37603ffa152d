//! Corpus evaluation: EM, NEM, Error, Diff, Good, Bad.
//!
//! String-identity metrics (EM/NEM) are computed directly; grammar and
//! meaning checks go through the pluggable [`Judge`]. Multi-reference
//! examples score against their best reference (any-match).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::judge::Judge;
use crate::pipeline::ProofreadExample;
use crate::text::nem_normalize;

/// Byte equality after Unicode NFC normalization.
pub fn exact_match(answer: &str, target: &str) -> bool {
    answer.nfc().eq(target.nfc())
}

/// Equality after lowercasing, dropping Unicode punctuation, collapsing
/// whitespace runs, and trimming.
pub fn normalized_exact_match(answer: &str, target: &str) -> bool {
    nem_normalize(answer) == nem_normalize(target)
}

/// Per-example outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleVerdict {
    pub em: bool,
    pub nem: bool,
    /// Judge found a grammar error in the answer.
    pub has_error: bool,
    /// Answer does not share meaning with any target.
    pub diff_meaning: bool,
    /// `!has_error && !diff_meaning`.
    pub good: bool,
}

/// Aggregated §4 ratios. `good + bad = 1` exactly on every report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub em: f64,
    pub nem: f64,
    pub error: f64,
    pub diff: f64,
    pub good: f64,
    pub bad: f64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_example: Option<Vec<ExampleVerdict>>,
}

impl MetricsReport {
    /// Same report without the per-example list (compact serialization).
    pub fn without_details(mut self) -> Self {
        self.per_example = None;
        self
    }
}

/// Scores one (input, answer, targets) triple.
///
/// The input is carried for parity with judges that score relative fixes;
/// the default checks judge the answer in isolation.
pub fn evaluate_example(
    _input: &str,
    answer: &str,
    targets: &[String],
    judge: &dyn Judge,
) -> Result<ExampleVerdict> {
    if targets.is_empty() {
        return Err(Error::EmptyTargets);
    }
    let em = targets.iter().any(|t| exact_match(answer, t));
    let nem = targets.iter().any(|t| normalized_exact_match(answer, t));
    let has_error = judge.check_grammar(answer)?;
    let mut same = false;
    for t in targets {
        if judge.check_same_meaning(answer, t)? {
            same = true;
            break;
        }
    }
    let diff_meaning = !same;
    Ok(ExampleVerdict {
        em,
        nem,
        has_error,
        diff_meaning,
        good: !has_error && !diff_meaning,
    })
}

/// Evaluates aligned (dataset, answers) streams into a [`MetricsReport`].
pub fn evaluate_corpus(
    dataset: &[ProofreadExample],
    answers: &[String],
    judge: &dyn Judge,
) -> Result<MetricsReport> {
    if dataset.len() != answers.len() {
        return Err(Error::LengthMismatch {
            expected: dataset.len(),
            actual: answers.len(),
        });
    }
    if dataset.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let verdicts: Vec<ExampleVerdict> = dataset
        .par_iter()
        .zip(answers.par_iter())
        .enumerate()
        .map(|(i, (ex, answer))| {
            evaluate_example(&ex.source, answer, &ex.references, judge)
                .map_err(|e| Error::Judge(format!("example {i}: {e}")))
        })
        .collect::<Result<_>>()?;

    let n = verdicts.len();
    let count = |f: fn(&ExampleVerdict) -> bool| verdicts.iter().filter(|v| f(v)).count();
    let ratio = |c: usize| c as f64 / n as f64;
    // bad comes from the raw count so that error <= bad and diff <= bad
    // compare integers over a shared denominator; good = 1 - bad then
    // still satisfies good + bad == 1 exactly (the rounding error of
    // 1 - bad is at most half an ulp of 1.0, which the final addition
    // rounds away).
    let bad = ratio(count(|v| !v.good));
    Ok(MetricsReport {
        em: ratio(count(|v| v.em)),
        nem: ratio(count(|v| v.nem)),
        error: ratio(count(|v| v.has_error)),
        diff: ratio(count(|v| v.diff_meaning)),
        good: 1.0 - bad,
        bad,
        n,
        per_example: Some(verdicts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::RuleJudge;
    use crate::pipeline::{ExampleMeta, ProofreadExample};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ex(source: &str, refs: &[&str]) -> ProofreadExample {
        ProofreadExample {
            source: source.to_string(),
            references: refs.iter().map(|s| s.to_string()).collect(),
            meta: ExampleMeta::default(),
        }
    }

    #[test]
    fn exact_match_examples() {
        assert!(exact_match("Hello.", "Hello."));
        assert!(!exact_match("Hello.", "hello"));
        // NFC vs NFD composition of é.
        assert!(exact_match("caf\u{e9}", "cafe\u{301}"));
    }

    #[test]
    fn normalized_match_examples() {
        assert!(normalized_exact_match("Good morning!", "good morning"));
        assert!(!normalized_exact_match("how are you", "how r you"));
    }

    #[test]
    fn em_implies_nem_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let alphabet: Vec<char> = "aB c.'!x\u{e9}".chars().collect();
        for _ in 0..500 {
            let s: String = (0..rng.random_range(0..12))
                .map(|_| alphabet[rng.random_range(0..alphabet.len())])
                .collect();
            let t: String = (0..rng.random_range(0..12))
                .map(|_| alphabet[rng.random_range(0..alphabet.len())])
                .collect();
            if exact_match(&s, &t) {
                assert!(normalized_exact_match(&s, &t), "{s:?} vs {t:?}");
            }
        }
    }

    #[test]
    fn evaluate_example_good_and_bad_cases() {
        let j = RuleJudge::default();
        let targets = vec!["i can help you with that".to_string()];
        let v = evaluate_example("i cqn help yoy", "i can help you with that", &targets, &j)
            .unwrap();
        assert!(v.em && v.nem && v.good && !v.has_error && !v.diff_meaning);

        // Uncorrected answer keeps its typos: grammar error.
        let v = evaluate_example("i cqn help yoy", "i cqn help yoy", &targets, &j).unwrap();
        assert!(v.has_error && !v.good);

        // Grammatical but negated: bad via meaning.
        let v = evaluate_example(
            "i can help you with that",
            "i cannot help you with that",
            &targets,
            &j,
        )
        .unwrap();
        assert!(!v.has_error && v.diff_meaning && !v.good);

        assert!(matches!(
            evaluate_example("x", "y", &[], &j),
            Err(Error::EmptyTargets)
        ));
    }

    #[test]
    fn corpus_identities_hold() {
        let j = RuleJudge::default();
        let dataset = vec![
            ex("tge quick fox", &["the quick fox"]),
            ex("hllo world", &["hello world"]),
            ex("see yoy soon", &["see you soon"]),
        ];
        let answers = vec![
            "the quick fox".to_string(),
            "hello world!".to_string(),
            "see yoy soon".to_string(),
        ];
        let r = evaluate_corpus(&dataset, &answers, &j).unwrap();
        assert_eq!(r.n, 3);
        assert_eq!(r.good + r.bad, 1.0);
        assert!(r.em <= r.nem);
        assert!(r.error.max(r.diff) <= r.bad);
        assert!(r.bad <= (r.error + r.diff).min(1.0) + 1e-12);
    }

    #[test]
    fn perfect_answers_score_one() {
        let j = RuleJudge::default();
        let dataset = vec![
            ex("tge quick fox", &["the quick fox"]),
            ex("hllo world", &["hello world"]),
        ];
        let answers: Vec<String> = dataset
            .iter()
            .map(|e| e.references[0].clone())
            .collect();
        let r = evaluate_corpus(&dataset, &answers, &j).unwrap();
        assert_eq!((r.em, r.nem, r.good), (1.0, 1.0, 1.0));
        assert_eq!((r.error, r.diff, r.bad), (0.0, 0.0, 0.0));
    }

    #[test]
    fn corpus_errors() {
        let j = RuleJudge::default();
        assert!(matches!(
            evaluate_corpus(&[], &[], &j),
            Err(Error::EmptyEvaluation)
        ));
        let d = vec![ex("a", &["a"])];
        assert!(matches!(
            evaluate_corpus(&d, &[], &j),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn adding_references_is_monotone() {
        let j = RuleJudge::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vocab = crate::vocab::Vocabulary::builtin();
        for _ in 0..40 {
            let answer = vocab.sample_sentence(5, &mut rng);
            let r1 = vec![vocab.sample_sentence(5, &mut rng)];
            let mut r2 = r1.clone();
            r2.push(answer.clone()); // extra reference matching the answer
            let v1 = evaluate_example("x", &answer, &r1, &j).unwrap();
            let v2 = evaluate_example("x", &answer, &r2, &j).unwrap();
            assert!(v2.em >= v1.em && v2.nem >= v1.nem && v2.good >= v1.good);
        }
    }

    #[test]
    fn determinism() {
        let j = RuleJudge::default();
        let dataset = vec![ex("hllo wrld", &["hello world"]); 10];
        let answers = vec!["hello world".to_string(); 10];
        let a = evaluate_corpus(&dataset, &answers, &j).unwrap();
        let b = evaluate_corpus(&dataset, &answers, &j).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
