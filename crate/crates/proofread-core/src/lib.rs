//! Keyboard-typo synthesis, decoder simulation, and proofreading
//! evaluation toolkit.
//!
//! The crate models the full path from clean text to a trainable
//! proofreading example and back:
//!
//! 1. [`keyboard`] — a Gaussian touch model over a staggered QWERTY
//!    layout, calibrated so literal nearest-key decoding mistypes 8–9% of
//!    letters.
//! 2. [`corruption`] — six keyboard-error operators (omissions,
//!    insertions, transpositions, double taps, dropped doubles, spatial
//!    substitutions) applied per character with a replayable edit log.
//! 3. [`decoder`] — literal decoding, beam-search key correction over a
//!    vocabulary trie, and noisy-channel auto-correction, composed into a
//!    keyboard-decoder simulation that leaves realistic residual errors.
//! 4. [`pipeline`] — corpus-scale dataset synthesis: corrupt, re-decode,
//!    restore protected tokens, filter through a judge, serialize JSONL.
//! 5. [`metrics`] / [`judge`] / [`rewards`] — EM/NEM and judge-based
//!    Error/Diff/Good/Bad ratios, a rule-based or HTTP judge backend, and
//!    reward functions (global, direct, KL-regularized) for RL loops.
//! 6. [`serving`] — a desk-scale serving simulator: length buckets,
//!    lossless paragraph segmentation, input-as-draft speculative
//!    decoding, int8 table quantization, and call-count benchmarks.
//!
//! Everything is deterministic under explicit seeds; corpus-scale entry
//! points parallelize internally with rayon.

pub mod corruption;
pub mod decoder;
pub mod error;
pub mod judge;
pub mod keyboard;
pub mod metrics;
pub mod pipeline;
pub mod rewards;
pub mod serving;
pub mod text;
pub mod vocab;

pub use corruption::{apply_operator, corrupt, corrupt_seeded, CorruptionConfig, EditLog, ErrorOperator};
pub use decoder::{auto_correct, key_correct, literal_decode, simulate, DecodeConfig, DecodeResult};
pub use error::{Error, Result};
pub use judge::{HttpJudge, Judge, RuleJudge};
pub use keyboard::{calibrate_sigma, literal_error_rate, KeyboardLayout, SpatialModel, TouchSequence, DEFAULT_SIGMA};
pub use metrics::{evaluate_corpus, evaluate_example, MetricsReport};
pub use pipeline::{build_dataset, filter_example, FilterVerdict, PipelineConfig, ProofreadExample};
pub use rewards::{direct_reward, global_reward, kl_regularized_reward, RewardConfig};
pub use serving::{bench, pick_bucket, quantize_tables, segment, speculative_decode, EditChannelModel, ServingConfig, TargetModel};
pub use vocab::Vocabulary;
