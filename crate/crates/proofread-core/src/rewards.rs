//! Reward functions for RL post-training: global good-fix reward, direct
//! per-criterion rewards built from the metrics verdicts, and KL shaping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judge::Judge;
use crate::metrics::evaluate_example;

/// Which base reward to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    #[default]
    Global,
    Direct,
}

/// How the direct reward combines the grammar and meaning criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Combiner {
    /// g · m — both criteria must pass. Identical to the good-fix metric.
    Product,
    /// w_grammar · g + w_meaning · m, weights summing to 1.
    WeightedSum { w_grammar: f64, w_meaning: f64 },
}

impl Default for Combiner {
    fn default() -> Self {
        Combiner::Product
    }
}

/// Full reward configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub kind: RewardKind,
    /// KL penalty strength β applied on top of the base reward.
    pub kl_beta: f64,
    pub direct_combiner: Combiner,
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.kl_beta.is_finite() || self.kl_beta < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "kl_beta must be finite and >= 0, got {}",
                self.kl_beta
            )));
        }
        if let Combiner::WeightedSum { w_grammar, w_meaning } = self.direct_combiner {
            for (name, w) in [("w_grammar", w_grammar), ("w_meaning", w_meaning)] {
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "{name} must be finite and >= 0, got {w}"
                    )));
                }
            }
            let sum = w_grammar + w_meaning;
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "weighted_sum weights must sum to 1.0, got {sum}"
                )));
            }
        }
        Ok(())
    }
}

/// Binary good-fix reward: 1.0 iff the candidate is grammatical and keeps
/// the input's meaning, else 0.0.
pub fn global_reward(input: &str, candidate: &str, judge: &dyn Judge) -> Result<f64> {
    Ok(if judge.check_good_fix(input, candidate)? { 1.0 } else { 0.0 })
}

/// Per-criterion reward over the example's ground-truth targets.
///
/// Reuses the metrics verdict, so with the product combiner this is
/// bitwise equal to the per-example `good` flag on any corpus.
pub fn direct_reward(
    input: &str,
    candidate: &str,
    target_set: &[String],
    judge: &dyn Judge,
    cfg: &RewardConfig,
) -> Result<f64> {
    let verdict = evaluate_example(input, candidate, target_set, judge)?;
    let g = f64::from(u8::from(!verdict.has_error));
    let m = f64::from(u8::from(!verdict.diff_meaning));
    Ok(match cfg.direct_combiner {
        Combiner::Product => g * m,
        Combiner::WeightedSum { w_grammar, w_meaning } => w_grammar * g + w_meaning * m,
    })
}

/// Per-token log-probabilities of one sampled sequence under the policy
/// being trained and under the frozen reference policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceLogProbs {
    pub policy_logp: Vec<f64>,
    pub reference_logp: Vec<f64>,
}

impl SequenceLogProbs {
    pub fn new(policy_logp: Vec<f64>, reference_logp: Vec<f64>) -> Result<Self> {
        if policy_logp.len() != reference_logp.len() {
            return Err(Error::LengthMismatch {
                expected: policy_logp.len(),
                actual: reference_logp.len(),
            });
        }
        if policy_logp
            .iter()
            .chain(&reference_logp)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidConfig(
                "log-probabilities must be finite".into(),
            ));
        }
        Ok(Self { policy_logp, reference_logp })
    }

    /// Σ_t (log π(a_t) − log π_ref(a_t)): the single-sample estimate of
    /// the sequence-level KL contribution.
    pub fn kl_estimate(&self) -> f64 {
        self.policy_logp
            .iter()
            .zip(&self.reference_logp)
            .map(|(p, r)| p - r)
            .sum()
    }
}

/// r − β · Σ_t (log π(a_t) − log π_ref(a_t)).
pub fn kl_regularized_reward(r: f64, lp: &SequenceLogProbs, kl_beta: f64) -> f64 {
    r - kl_beta * lp.kl_estimate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::RuleJudge;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn global_reward_canonical_examples() {
        let j = RuleJudge::default();
        // Clean reference of the input → 1.
        assert_eq!(
            global_reward("i cqn help you", "i can help you", &j).unwrap(),
            1.0
        );
        // Input unchanged, typos intact → 0.
        assert_eq!(
            global_reward("i cqn help you", "i cqn help you", &j).unwrap(),
            0.0
        );
        // Unrelated sentence → 0.
        assert_eq!(
            global_reward("i cqn help you", "the weather is lovely today", &j).unwrap(),
            0.0
        );
    }

    #[test]
    fn direct_product_bitwise_equals_metric_good() {
        let j = RuleJudge::default();
        let cfg = RewardConfig::default();
        let cases: &[(&str, &str, &[&str])] = &[
            ("i cqn help you", "i can help you", &["i can help you"]),
            ("i cqn help you", "i cqn help you", &["i can help you"]),
            ("meet me tomorrow", "do not meet me tomorrow", &["meet me tomorrow"]),
            ("helo world", "hello world", &["hello world", "hello there world"]),
            ("she walked home", "she walked home", &["she walked home"]),
            ("the dog barks", "weather is nice", &["the dog barks"]),
        ];
        for (input, candidate, targets) in cases {
            let targets: Vec<String> = targets.iter().map(|s| s.to_string()).collect();
            let reward = direct_reward(input, candidate, &targets, &j, &cfg).unwrap();
            let verdict = evaluate_example(input, candidate, &targets, &j).unwrap();
            let good: f64 = if verdict.good { 1.0 } else { 0.0 };
            assert_eq!(
                reward.to_bits(),
                good.to_bits(),
                "product reward != metric good for ({input}, {candidate})"
            );
        }
    }

    #[test]
    fn weighted_sum_combiner_examples() {
        let j = RuleJudge::default();
        let half = RewardConfig {
            kind: RewardKind::Direct,
            direct_combiner: Combiner::WeightedSum { w_grammar: 0.5, w_meaning: 0.5 },
            kl_beta: 0.0,
        };
        let product = RewardConfig::default();
        let targets = vec!["meet me tomorrow".to_string()];

        // Good candidate → 1 under both combiners.
        let r_prod =
            direct_reward("meet me tmrrow", "meet me tomorrow", &targets, &j, &product).unwrap();
        let r_half =
            direct_reward("meet me tmrrow", "meet me tomorrow", &targets, &j, &half).unwrap();
        assert_eq!(r_prod, 1.0);
        assert_eq!(r_half, 1.0);

        // Grammatical but wrong-meaning: product → 0, (0.5, 0.5) → 0.5.
        let cand = "do not meet me tomorrow";
        let r_prod = direct_reward("meet me tmrrow", cand, &targets, &j, &product).unwrap();
        let r_half = direct_reward("meet me tmrrow", cand, &targets, &j, &half).unwrap();
        assert_eq!(r_prod, 0.0);
        assert!((r_half - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kl_regularized_arithmetic() {
        // r = 1.0, β = 0.1, Σ(logπ − logπ_ref) = 2.0 → 0.8.
        let lp = SequenceLogProbs::new(vec![-1.0, -1.0], vec![-2.0, -2.0]).unwrap();
        assert!((lp.kl_estimate() - 2.0).abs() < 1e-12);
        assert!((kl_regularized_reward(1.0, &lp, 0.1) - 0.8).abs() < 1e-12);

        // β = 0 leaves the base reward untouched.
        assert_eq!(kl_regularized_reward(1.0, &lp, 0.0), 1.0);

        // Policy equal to reference ⇒ no penalty for any β.
        let same = SequenceLogProbs::new(vec![-0.5, -3.0], vec![-0.5, -3.0]).unwrap();
        assert_eq!(kl_regularized_reward(0.25, &same, 5.0), 0.25);
    }

    #[test]
    fn kl_monotone_in_beta_when_term_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(1..20);
            // Policy strictly above reference ⇒ positive KL estimate.
            let reference: Vec<f64> = (0..n).map(|_| -rng.random_range(0.5..4.0)).collect();
            let policy: Vec<f64> = reference
                .iter()
                .map(|r| r + rng.random_range(0.01..1.0))
                .collect();
            let lp = SequenceLogProbs::new(policy, reference).unwrap();
            assert!(lp.kl_estimate() > 0.0);
            let r = rng.random_range(0.0..1.0);
            let mut last = f64::INFINITY;
            for beta in [0.0, 0.05, 0.1, 0.5, 2.0] {
                let shaped = kl_regularized_reward(r, &lp, beta);
                assert!(shaped <= last + 1e-12);
                assert!(shaped <= 1.0 + 1e-12, "rewards must stay ≤ 1");
                last = shaped;
            }
        }
    }

    #[test]
    fn logprob_validation() {
        assert!(matches!(
            SequenceLogProbs::new(vec![0.0], vec![0.0, 0.0]),
            Err(Error::LengthMismatch { expected: 1, actual: 2 })
        ));
        assert!(SequenceLogProbs::new(vec![f64::NAN], vec![0.0]).is_err());
        assert!(SequenceLogProbs::new(vec![0.0], vec![f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(RewardConfig::default().validate().is_ok());
        let bad_beta = RewardConfig { kl_beta: -0.5, ..Default::default() };
        assert!(bad_beta.validate().is_err());
        let bad_weights = RewardConfig {
            direct_combiner: Combiner::WeightedSum { w_grammar: 0.9, w_meaning: 0.5 },
            ..Default::default()
        };
        assert!(bad_weights.validate().is_err());
        let ok = RewardConfig {
            kind: RewardKind::Direct,
            direct_combiner: Combiner::WeightedSum { w_grammar: 0.5, w_meaning: 0.5 },
            kl_beta: 0.2,
        };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn config_json_roundtrip() {
        let cfg = RewardConfig {
            kind: RewardKind::Direct,
            direct_combiner: Combiner::WeightedSum { w_grammar: 0.4, w_meaning: 0.6 },
            kl_beta: 0.05,
        };
        let s = serde_json::to_string(&cfg).unwrap();
        let back: RewardConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
        // Defaults fill in missing fields.
        let partial: RewardConfig = serde_json::from_str(r#"{"kind":"direct"}"#).unwrap();
        assert_eq!(partial.kind, RewardKind::Direct);
        assert_eq!(partial.direct_combiner, Combiner::Product);
        assert_eq!(partial.kl_beta, 0.0);
    }
}
