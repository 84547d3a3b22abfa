//! The `gtrans` command line: `gen-data`, `train`, `decode`, `eval` and
//! `diagnose`.
//!
//! Settings resolve as built-in defaults, then the `--config` file, then
//! flags. Every command writes `manifest.json` into its run directory.
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{generate, read_documents, write_documents, CorpusFiles, SyntheticTaskSpec, Task};
use crate::decoding::{decode_corpus, LengthParams};
use crate::diagnostics::{detect_plateau, is_monotone_non_increasing, EntropySeries};
use crate::error::{Error, Result};
use crate::metrics::{d_bleu, s_bleu};
use crate::model::{transfer_from_sentence_model, Model, ModelConfig, Variant};
use crate::nnet::Checkpoint;
use crate::tagging::TokenDocument;
use crate::training::{train, Regime, TrainConfig, TrainLog};
use crate::vocab::Vocab;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub beam_size: usize,
    pub a: f64,
    pub b: usize,
    pub alpha: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        let l = LengthParams::default();
        DecodeConfig {
            beam_size: 5,
            a: l.a,
            b: l.b,
            alpha: l.alpha,
        }
    }
}

impl DecodeConfig {
    pub fn length_params(&self) -> LengthParams {
        LengthParams {
            a: self.a,
            b: self.b,
            alpha: self.alpha,
        }
    }
}

/// Contents of a `--config` file; every table is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub data: SyntheticTaskSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        c.train.validate()?;
        Ok(c)
    }

    /// Loads `path`, falling back to `configs/<path>` and
    /// `configs/<path>.toml`.
    pub fn load(path: &Path) -> Result<Self> {
        let candidates = [
            path.to_path_buf(),
            Path::new("configs").join(path),
            Path::new("configs").join(format!("{}.toml", path.display())),
        ];
        let found = candidates
            .iter()
            .find(|p| p.is_file())
            .ok_or_else(|| Error::config(format!("config file {} not found", path.display())))?;
        Self::from_toml(&fs::read_to_string(found)?)
    }
}

#[derive(Debug, Parser)]
#[command(name = "gtrans", version, about = "Document-level translation with group-tag attention")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file with [model], [train], [decode] and [data] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the run manifest.
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic parallel corpus.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        task: Option<Task>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        vocab_size: Option<usize>,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        dev: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
    },
    /// Train a model on a corpus directory.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
        /// Defaults to random initialisation of the chosen variant.
        #[arg(long)]
        regime: Option<Regime>,
        /// Sentence-level checkpoint for `finetune-gtrans`.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_steps: Option<u64>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        warmup_steps: Option<u64>,
    },
    /// Translate documents, one per line.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Writes `i-i` sentence alignments, one document per line.
        #[arg(long)]
        alignment: Option<PathBuf>,
        #[arg(long)]
        beam_size: Option<usize>,
    },
    /// Score candidate documents against references.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        references: PathBuf,
    },
    /// Summarise plateaus and attention-entropy trends of a training run.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Training output directory (with log.jsonl and traces/).
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 3)]
        window: usize,
        #[arg(long, default_value_t = 0.01)]
        slope_tol: f64,
        /// Detect plateaus on the natural log of the loss, so the tolerance
        /// is a relative improvement.
        #[arg(long)]
        log_loss: bool,
        /// Band for the entropy trend check, in bits.
        #[arg(long, default_value_t = 0.2)]
        tolerance: f64,
    },
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a RunConfig,
    seed: Option<u64>,
    git_revision: String,
    started_unix_s: u64,
    wall_clock_s: f64,
    version: &'static str,
}

fn git_revision() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn write_manifest(dir: &Path, command: &str, config: &RunConfig, seed: Option<u64>, started: (u64, Instant)) -> Result<()> {
    fs::create_dir_all(dir)?;
    let m = Manifest {
        command,
        config,
        seed,
        git_revision: git_revision(),
        started_unix_s: started.0,
        wall_clock_s: started.1.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION"),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
    Ok(())
}

fn default_run_dir(command: &str, started: u64) -> PathBuf {
    Path::new("runs").join(format!("{command}-{started}"))
}

fn load_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// Parses `argv` (program name first) and runs the command; returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn execute(command: Command) -> Result<()> {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let started = (now, Instant::now());
    match command {
        Command::GenData {
            common,
            out,
            task,
            seed,
            vocab_size,
            train,
            dev,
            test,
        } => {
            let mut cfg = load_config(&common)?;
            let spec = &mut cfg.data;
            if let Some(t) = task {
                spec.task = t;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(v) = vocab_size {
                spec.vocab_size = v;
            }
            if let Some(n) = train {
                spec.train = n;
            }
            if let Some(n) = dev {
                spec.dev = n;
            }
            if let Some(n) = test {
                spec.test = n;
            }
            let corpus = generate(spec)?;
            corpus.save(&out)?;
            println!(
                "wrote {} train / {} dev / {} test documents to {}",
                corpus.train.len(),
                corpus.dev.len(),
                corpus.test.len(),
                out.display()
            );
            let seed = Some(cfg.data.seed);
            write_manifest(common.run_dir.as_deref().unwrap_or(&out), "gen-data", &cfg, seed, started)
        }
        Command::Train {
            common,
            data,
            out,
            variant,
            regime,
            init,
            seed,
            max_steps,
            learning_rate,
            warmup_steps,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(v) = variant {
                cfg.model.variant = v;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(n) = max_steps {
                cfg.train.max_steps = n;
            }
            if let Some(lr) = learning_rate {
                cfg.train.learning_rate = lr;
            }
            if let Some(w) = warmup_steps {
                cfg.train.warmup_steps = w;
            }
            cfg.train.validate()?;
            let regime = regime.unwrap_or(match cfg.model.variant {
                Variant::BaselineTransformer => Regime::RandomInitBaseline,
                Variant::GTransformer => Regime::RandomInitGtrans,
            });
            if regime == Regime::FinetuneGtrans {
                cfg.model.variant = Variant::GTransformer;
            }
            let corpus = CorpusFiles::load(&data)?;
            cfg.model.vocab_size = corpus.vocab.len();
            cfg.model.validate()?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
            let fresh = Model::new(cfg.model.clone(), &mut rng)?;
            let (model, partition) = match (regime, &init) {
                (Regime::FinetuneGtrans, Some(path)) => {
                    let sentence = Model::from_checkpoint(Checkpoint::load(path)?)?;
                    let (m, p) = transfer_from_sentence_model(&sentence, &fresh)?;
                    (m, Some(p))
                }
                (Regime::FinetuneGtrans, None) => {
                    return Err(Error::config("finetune-gtrans needs --init <sentence checkpoint>"));
                }
                _ => (fresh, None),
            };
            fs::create_dir_all(&out)?;
            fs::write(out.join("config.toml"), toml::to_string(&cfg).map_err(|e| Error::config(e.to_string()))?)?;
            let outcome = train(model, &corpus.train, &corpus.dev, regime, partition.as_ref(), &cfg.train, Some(&out))?;
            println!(
                "trained {} steps; best validation loss {:.4} at step {}{}",
                outcome.steps,
                outcome.best_valid_loss,
                outcome.best_step,
                if outcome.stopped_early { " (early stop)" } else { "" }
            );
            let seed = Some(cfg.train.seed);
            write_manifest(common.run_dir.as_deref().unwrap_or(&out), "train", &cfg, seed, started)
        }
        Command::Decode {
            common,
            checkpoint,
            vocab,
            input,
            output,
            alignment,
            beam_size,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(b) = beam_size {
                cfg.decode.beam_size = b;
            }
            let model = Model::from_checkpoint(Checkpoint::load(&checkpoint)?)?;
            cfg.model = model.config().clone();
            let vocab = Vocab::load(&vocab)?;
            let docs = read_documents(&input, &vocab)?;
            let outs = decode_corpus(&model, &docs, cfg.decode.beam_size, &cfg.decode.length_params())?;
            let translated: Vec<TokenDocument> = outs.iter().map(|o| o.document.clone()).collect();
            write_documents(&output, &translated, &vocab)?;
            if let Some(path) = alignment {
                let mut text = String::new();
                for d in &translated {
                    let n = d.num_sentences()?;
                    let line: Vec<String> = (0..n).map(|i| format!("{i}-{i}")).collect();
                    text.push_str(&line.join(" "));
                    text.push('\n');
                }
                fs::write(path, text)?;
            }
            let truncated = outs.iter().filter(|o| o.truncated).count();
            println!("decoded {} documents ({truncated} truncated)", outs.len());
            let dir = common.run_dir.unwrap_or_else(|| default_run_dir("decode", started.0));
            write_manifest(&dir, "decode", &cfg, None, started)
        }
        Command::Eval {
            common,
            candidates,
            references,
        } => {
            let cfg = load_config(&common)?;
            let (cand, refs) = read_text_documents(&candidates, &references)?;
            let d = d_bleu(&cand, &refs)?;
            let s = s_bleu(&cand, &refs);
            let record = serde_json::json!({
                "d_bleu": d,
                "s_bleu": s.as_ref().ok(),
            });
            println!("{record}");
            match &s {
                Ok(s) => println!("d-BLEU {:.2}  s-BLEU {:.2}", d.score, s.score),
                Err(e) => println!("d-BLEU {:.2}  s-BLEU unavailable: {e}", d.score),
            }
            let dir = common.run_dir.unwrap_or_else(|| default_run_dir("eval", started.0));
            write_manifest(&dir, "eval", &cfg, None, started)
        }
        Command::Diagnose {
            common,
            run,
            window,
            slope_tol,
            log_loss,
            tolerance,
        } => {
            let cfg = load_config(&common)?;
            let log = TrainLog::read_jsonl(&run.join("log.jsonl"))?;
            let mut losses = log.series("valid", "loss");
            if log_loss {
                for p in &mut losses {
                    p.1 = p.1.ln();
                }
            }
            let plateaus = detect_plateau(&losses, window, slope_tol);
            println!("{} validation checkpoints", losses.len());
            if plateaus.is_empty() {
                println!("no plateau (window {window}, slope tolerance {slope_tol})");
            }
            for (a, b) in &plateaus {
                println!("plateau: steps {a}..{b}");
            }
            let entropy = load_entropy(&run.join("traces"))?;
            for (site, scope) in [
                (crate::attention::trace::Site::EncSelf, None),
                (crate::attention::trace::Site::DecSelf, None),
                (crate::attention::trace::Site::Cross, None),
            ] {
                let series = entropy.series(Some(site), scope);
                if let (Some(first), Some(last)) = (series.first(), series.last()) {
                    let values: Vec<f64> = series.iter().map(|p| p.1).collect();
                    println!(
                        "{:8} entropy {:.3} -> {:.3} bits over {} traces; non-increasing within {tolerance}: {}",
                        site.as_str(),
                        first.1,
                        last.1,
                        series.len(),
                        is_monotone_non_increasing(&values, tolerance)
                    );
                }
            }
            fs::write(run.join("entropy.csv"), entropy.to_csv())?;
            let dir = common.run_dir.unwrap_or_else(|| default_run_dir("diagnose", started.0));
            write_manifest(&dir, "diagnose", &cfg, None, started)
        }
    }
}

fn load_entropy(dir: &Path) -> Result<EntropySeries> {
    let mut series = EntropySeries::default();
    if !dir.is_dir() {
        return Ok(series);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    for f in files {
        let trace = crate::attention::trace::AttentionTrace::load(&f)?;
        series.push(crate::diagnostics::attention_entropy(&trace)?)?;
    }
    Ok(series)
}

/// Reads two whitespace-tokenised document files over a shared vocabulary.
fn read_text_documents(cand: &Path, refs: &Path) -> Result<(Vec<TokenDocument>, Vec<TokenDocument>)> {
    let (c, r) = (fs::read_to_string(cand)?, fs::read_to_string(refs)?);
    let mut words: Vec<&str> = c.split_whitespace().chain(r.split_whitespace()).collect();
    words.sort_unstable();
    words.dedup();
    let specials = [crate::vocab::PAD_STR, crate::vocab::UNK_STR, crate::vocab::BOS_STR, crate::vocab::EOS_STR];
    let vocab = Vocab::new(words.into_iter().filter(|w| !specials.contains(w)))?;
    let parse = |text: &str| -> Result<Vec<TokenDocument>> {
        text.lines()
            .map(|l| {
                let d = TokenDocument::new(vocab.encode_line(l, true)?);
                d.validate()?;
                Ok(d)
            })
            .collect()
    };
    Ok((parse(&c)?, parse(&r)?))
}
