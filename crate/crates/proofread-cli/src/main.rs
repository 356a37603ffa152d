//! proofread-forge: dataset synthesis, decoder simulation, evaluation,
//! reward scoring, and serving benchmarks from one binary.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 I/O error. Logs go
//! to standard error; data goes to files or standard output.

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use proofread_core::corruption::CorruptionConfig;
use proofread_core::decoder::{simulate, DecodeConfig};
use proofread_core::error::{Error, Result};
use proofread_core::judge::{HttpJudge, Judge, RuleJudge};
use proofread_core::keyboard::{calibrate_sigma, literal_error_rate, KeyboardLayout, SpatialModel};
use proofread_core::metrics::evaluate_corpus;
use proofread_core::pipeline::{build_dataset, read_jsonl, write_jsonl, PipelineConfig};
use proofread_core::rewards::{direct_reward, global_reward, RewardConfig};
use proofread_core::serving::{bench, speculative_decode, EditChannelModel, ServingConfig, SpecDecodeTrace, TargetModel};
use proofread_core::text::derive_seed;
use proofread_core::vocab::Vocabulary;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// On-disk config: one JSON document; command-line flags override fields.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct GlobalConfig {
    corruption: CorruptionConfig,
    decode: DecodeConfig,
    serving: ServingConfig,
    vocab_path: Option<PathBuf>,
    judge: JudgeConfig,
    /// Master seed; when set (or overridden by --seed) it is pushed into
    /// every submodule config.
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum JudgeConfig {
    #[default]
    Rule,
    Http {
        endpoint: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum JudgeKind {
    Rule,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RewardArg {
    Global,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ServeMode {
    Baseline,
    Speculative,
}

#[derive(Parser, Debug)]
#[command(
    name = "proofread-forge",
    version,
    about = "Keyboard-typo dataset synthesis, decoding simulation, and proofreading evaluation"
)]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed pushed into every submodule config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for corpus-parallel stages (0 = rayon default).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct JudgeArgs {
    /// Judge backend for grammar/meaning checks.
    #[arg(long, value_enum)]
    judge: Option<JudgeKind>,
    /// Endpoint for --judge http (e.g. http://localhost:8080).
    #[arg(long, value_name = "URL")]
    judge_endpoint: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Corrupt a clean corpus, re-decode it, filter, and write JSONL.
    Pipeline {
        /// Clean corpus, one reference text per line.
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Output dataset (JSONL, one example per line).
        #[arg(long, value_name = "FILE")]
        output: PathBuf,
        /// Corruption parameters as a JSON file.
        #[arg(long, value_name = "FILE")]
        corruption_config: Option<PathBuf>,
        /// Vocabulary TSV (word<TAB>count); defaults to the built-in list.
        #[arg(long, value_name = "FILE")]
        vocab: Option<PathBuf>,
        #[command(flatten)]
        judge: JudgeArgs,
    },
    /// Read text lines on stdin, decode them, write DecodeResult JSONL.
    DecodeSim {
        /// Vocabulary TSV; defaults to the built-in list.
        #[arg(long, value_name = "FILE")]
        vocab: Option<PathBuf>,
        /// Touch noise in key widths; defaults to the calibrated value.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Score an answers file against a dataset's references.
    Evaluate {
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
        /// One answer per line, aligned with the dataset.
        #[arg(long, value_name = "FILE")]
        answers: PathBuf,
        #[command(flatten)]
        judge: JudgeArgs,
        /// Where to write the metrics report.
        #[arg(long, value_name = "FILE", default_value = "report.json")]
        report: PathBuf,
        /// Include per-example verdicts in the report.
        #[arg(long)]
        details: bool,
    },
    /// Emit per-example rewards for candidate corrections as JSONL.
    ScoreRewards {
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
        /// One candidate per line, aligned with the dataset.
        #[arg(long, value_name = "FILE")]
        candidates: PathBuf,
        #[arg(long, value_enum, default_value = "global")]
        reward: RewardArg,
        #[command(flatten)]
        judge: JudgeArgs,
        /// Write rewards here instead of stdout.
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Benchmark serving modes over a dataset's sources.
    ServeSim {
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
        /// Which mode's medians go in the report (both always run).
        #[arg(long, value_enum, default_value = "speculative")]
        mode: ServeMode,
        #[arg(long)]
        temperature: Option<f64>,
        /// Comma-separated bucket keys, e.g. 16,32,64,128.
        #[arg(long, value_name = "LIST")]
        buckets: Option<String>,
        #[arg(long)]
        max_draft_len: Option<usize>,
        /// Argmax decoding instead of sampling.
        #[arg(long)]
        greedy: bool,
        /// Vocabulary TSV; defaults to the built-in list.
        #[arg(long, value_name = "FILE")]
        vocab: Option<PathBuf>,
        #[arg(long, value_name = "FILE", default_value = "bench.json")]
        report: PathBuf,
        /// Include per-example speculative traces in the report.
        #[arg(long)]
        traces: bool,
    },
    /// Find the touch sigma whose literal error rate hits the target.
    CalibrateSigma {
        /// Target per-letter literal decode error rate.
        #[arg(long, default_value_t = 0.085)]
        target_error: f64,
        /// Sample size in characters for the Monte-Carlo estimate.
        #[arg(long, default_value_t = 100_000)]
        chars: usize,
    },
}

/// The serve-sim report shape: medians of the selected mode plus the
/// call reduction of speculative over baseline.
#[derive(Debug, Serialize)]
struct ServeReport {
    n: usize,
    mode: String,
    median_ms: f64,
    median_target_calls: f64,
    reduction_pct: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    traces: Option<Vec<SpecDecodeTrace>>,
}

#[derive(Debug, Serialize)]
struct RewardLine<'a> {
    index: usize,
    source: &'a str,
    candidate: &'a str,
    reward: f64,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Io(_) => 2,
                _ => 1,
            }
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().map(str::to_string).collect())
}

fn load_config(cli: &Cli) -> Result<GlobalConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| {
                Error::InvalidConfig(format!("{}: {e}", path.display()))
            })?
        }
        None => GlobalConfig::default(),
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    if let Some(seed) = config.seed {
        config.corruption.seed = seed;
        config.decode.seed = seed;
        config.serving.seed = seed;
    }
    Ok(config)
}

fn load_vocab(flag: &Option<PathBuf>, config: &GlobalConfig) -> Result<Arc<Vocabulary>> {
    match flag.as_ref().or(config.vocab_path.as_ref()) {
        Some(path) => Ok(Arc::new(Vocabulary::from_tsv_file(path)?)),
        None => Ok(Vocabulary::builtin()),
    }
}

fn make_judge(args: &JudgeArgs, config: &GlobalConfig, vocab: &Arc<Vocabulary>) -> Result<Box<dyn Judge>> {
    let kind = match args.judge {
        Some(JudgeKind::Rule) => JudgeConfig::Rule,
        Some(JudgeKind::Http) => {
            let endpoint = args
                .judge_endpoint
                .clone()
                .or(match &config.judge {
                    JudgeConfig::Http { endpoint } => Some(endpoint.clone()),
                    JudgeConfig::Rule => None,
                })
                .ok_or_else(|| {
                    Error::InvalidConfig("--judge http requires --judge-endpoint".into())
                })?;
            JudgeConfig::Http { endpoint }
        }
        None => config.judge.clone(),
    };
    Ok(match kind {
        JudgeConfig::Rule => Box::new(RuleJudge::new(Arc::clone(vocab))),
        JudgeConfig::Http { endpoint } => Box::new(HttpJudge::new(endpoint)?),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("--jobs: {e}")))?;
    }
    let config = load_config(&cli)?;
    match cli.command {
        Command::Pipeline { ref input, ref output, ref corruption_config, ref vocab, ref judge } => {
            let vocab = load_vocab(vocab, &config)?;
            let judge = make_judge(judge, &config, &vocab)?;
            let mut pipeline = PipelineConfig {
                corruption: config.corruption.clone(),
                decode: config.decode.clone(),
            };
            if let Some(path) = corruption_config {
                let text = fs::read_to_string(path)?;
                pipeline.corruption = serde_json::from_str(&text).map_err(|e| {
                    Error::InvalidConfig(format!("{}: {e}", path.display()))
                })?;
                if let Some(seed) = config.seed {
                    pipeline.corruption.seed = seed;
                }
            }
            let lines = read_lines(input)?;
            let dataset = build_dataset(&lines, &pipeline, &vocab, judge.as_ref())?;
            let file = fs::File::create(output)?;
            write_jsonl(io::BufWriter::new(file), &dataset)?;
            eprintln!(
                "pipeline: {} corpus lines -> {} examples -> {}",
                lines.len(),
                dataset.len(),
                output.display()
            );
            Ok(())
        }
        Command::DecodeSim { ref vocab, sigma } => {
            let vocab = load_vocab(vocab, &config)?;
            let layout = Arc::new(KeyboardLayout::qwerty());
            let model = match sigma {
                Some(s) => SpatialModel::isotropic(layout, s)?,
                None => SpatialModel::default_qwerty(),
            };
            let stdin = io::stdin();
            let stdout = io::stdout();
            let mut out = io::BufWriter::new(stdout.lock());
            for (i, line) in stdin.lock().lines().enumerate() {
                let line = line?;
                let decode = DecodeConfig {
                    seed: derive_seed(config.decode.seed, i as u64),
                    ..config.decode.clone()
                };
                let result = simulate(&line, &model, &vocab, &decode);
                serde_json::to_writer(&mut out, &result)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
            Ok(())
        }
        Command::Evaluate { ref dataset, ref answers, ref judge, ref report, details } => {
            let vocab = load_vocab(&None, &config)?;
            let judge = make_judge(judge, &config, &vocab)?;
            let examples = read_jsonl(BufReader::new(fs::File::open(dataset)?))?;
            let answers = read_lines(answers)?;
            let full = evaluate_corpus(&examples, &answers, judge.as_ref())?;
            let out = if details { full } else { full.without_details() };
            write_json(report, &out)?;
            eprintln!(
                "evaluate: n={} em={:.4} nem={:.4} good={:.4} bad={:.4} -> {}",
                out.n,
                out.em,
                out.nem,
                out.good,
                out.bad,
                report.display()
            );
            Ok(())
        }
        Command::ScoreRewards { ref dataset, ref candidates, reward, ref judge, ref output } => {
            let vocab = load_vocab(&None, &config)?;
            let judge = make_judge(judge, &config, &vocab)?;
            let examples = read_jsonl(BufReader::new(fs::File::open(dataset)?))?;
            let candidates = read_lines(candidates)?;
            if examples.len() != candidates.len() {
                return Err(Error::LengthMismatch {
                    expected: examples.len(),
                    actual: candidates.len(),
                });
            }
            let reward_cfg = RewardConfig::default();
            let mut lines = Vec::with_capacity(examples.len());
            for (i, (ex, cand)) in examples.iter().zip(&candidates).enumerate() {
                let value = match reward {
                    RewardArg::Global => global_reward(&ex.source, cand, judge.as_ref())?,
                    RewardArg::Direct => {
                        direct_reward(&ex.source, cand, &ex.references, judge.as_ref(), &reward_cfg)?
                    }
                };
                lines.push(serde_json::to_string(&RewardLine {
                    index: i,
                    source: &ex.source,
                    candidate: cand,
                    reward: value,
                })?);
            }
            let body = lines.join("\n") + "\n";
            match output {
                Some(path) => fs::write(path, body)?,
                None => io::stdout().write_all(body.as_bytes())?,
            }
            Ok(())
        }
        Command::ServeSim {
            ref dataset,
            mode,
            temperature,
            ref buckets,
            max_draft_len,
            greedy,
            ref vocab,
            ref report,
            traces,
        } => {
            let vocab = load_vocab(vocab, &config)?;
            let mut serving = config.serving.clone();
            if let Some(t) = temperature {
                serving.temperature = t;
            }
            if let Some(list) = buckets {
                serving.bucket_keys = list
                    .split(',')
                    .map(|p| {
                        p.trim().parse::<usize>().map_err(|e| {
                            Error::InvalidConfig(format!("--buckets {p:?}: {e}"))
                        })
                    })
                    .collect::<Result<_>>()?;
            }
            if let Some(l) = max_draft_len {
                serving.max_draft_len = l;
            }
            if greedy {
                serving.greedy = true;
            }
            serving.validate()?;
            let examples = read_jsonl(BufReader::new(fs::File::open(dataset)?))?;
            let inputs: Vec<String> = examples.iter().map(|e| e.source.clone()).collect();
            let model = EditChannelModel::new(&vocab, &inputs);
            let bench_report = bench(&model, &inputs, &serving)?;
            let picked = match mode {
                ServeMode::Baseline => bench_report.baseline,
                ServeMode::Speculative => bench_report.speculative,
            };
            let trace_list = if traces {
                let mut list = Vec::with_capacity(inputs.len());
                for (i, input) in inputs.iter().enumerate() {
                    let tokens = model.encode(input);
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(derive_seed(serving.seed, i as u64));
                    let (_, trace) = speculative_decode(&model, &tokens, &serving, &mut rng)?;
                    list.push(trace);
                }
                Some(list)
            } else {
                None
            };
            let out = ServeReport {
                n: bench_report.n,
                mode: format!("{mode:?}").to_lowercase(),
                median_ms: picked.median_ms,
                median_target_calls: picked.median_target_calls,
                reduction_pct: bench_report.reduction_pct,
                traces: trace_list,
            };
            write_json(report, &out)?;
            eprintln!(
                "serve-sim: n={} baseline_calls={} speculative_calls={} reduction={:.1}% -> {}",
                bench_report.n,
                bench_report.baseline.median_target_calls,
                bench_report.speculative.median_target_calls,
                bench_report.reduction_pct,
                report.display()
            );
            Ok(())
        }
        Command::CalibrateSigma { target_error, chars } => {
            let vocab = load_vocab(&None, &config)?;
            let seed = config.seed.unwrap_or(0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let text = vocab.sample_text(chars, &mut rng);
            let layout = Arc::new(KeyboardLayout::qwerty());
            let sigma = calibrate_sigma(Arc::clone(&layout), &text, target_error, seed)?;
            let model = SpatialModel::isotropic(layout, sigma)?;
            let mut check_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
            let achieved = literal_error_rate(&model, &text, &mut check_rng);
            println!("{sigma:.6}");
            eprintln!(
                "calibrate-sigma: sigma={sigma:.6} achieves literal error rate {:.4} (target {target_error:.4}, {chars} chars)",
                achieved
            );
            Ok(())
        }
    }
}
