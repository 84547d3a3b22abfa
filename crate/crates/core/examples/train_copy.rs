//! Trains a small G-Transformer on the synthetic copy task and saves the
//! best checkpoint.
//!
//! ```text
//! cargo run --release --example train_copy -- [max_steps] [out_dir]
//! ```

use gtransformer::corpus::{generate, SyntheticTaskSpec, Task};
use gtransformer::decoding::{beam_search_document, LengthParams};
use gtransformer::model::{Model, ModelConfig, Variant};
use gtransformer::training::{evaluate, train, Regime, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gtransformer::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let max_steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let out_dir = std::env::args().nth(2).map(std::path::PathBuf::from);

    let corpus = generate(&SyntheticTaskSpec {
        task: Task::Copy,
        vocab_size: 16,
        sentences: (8, 12),
        tokens: (5, 10),
        train: 50,
        dev: 10,
        test: 10,
        seed: 11,
        ..Default::default()
    })?;
    let config = ModelConfig {
        n_heads: 2,
        dropout: 0.1,
        ..ModelConfig::toy(corpus.vocab.len())
    }
    .with_variant(Variant::GTransformer);
    let model = Model::new(config, &mut ChaCha8Rng::seed_from_u64(5))?;
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        warmup_steps: 200,
        batch_tokens: 1000,
        max_steps,
        eval_every: 100,
        patience: 30,
        word_dropout: Some(0.1),
        trace_every: 0,
        ..Default::default()
    };
    let out = train(model, &corpus.train, &corpus.dev, Regime::RandomInitGtrans, None, &cfg, out_dir.as_deref())?;
    for (step, acc) in out.log.series("valid", "accuracy") {
        println!("step {step:5}  valid accuracy {acc:.4}");
    }
    let train_stats = evaluate(&out.model, &corpus.train)?;
    println!("train accuracy {:.4}", train_stats.accuracy);
    let len = LengthParams::default();
    let exact = corpus
        .test
        .iter()
        .map(|p| beam_search_document(&p.src, &out.model, 5, &len).map(|o| o.document == p.tgt))
        .collect::<gtransformer::Result<Vec<bool>>>()?;
    println!(
        "{} of {} test documents copied exactly",
        exact.iter().filter(|&&e| e).count(),
        exact.len()
    );
    let test = evaluate(&out.model, &corpus.test)?;
    println!(
        "best step {}  test loss {:.4}  test accuracy {:.4}",
        out.best_step, test.loss, test.accuracy
    );
    Ok(())
}
