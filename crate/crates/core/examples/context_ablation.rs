//! Trains G-Transformers with source-side or target-side global attention
//! switched off and compares their validation accuracy on the coreference
//! task.
//!
//! ```text
//! cargo run --release --example context_ablation -- [steps]
//! ```

use gtransformer::corpus::{generate, SyntheticTaskSpec, Task};
use gtransformer::model::{Model, ModelConfig, Variant};
use gtransformer::training::{evaluate, train, Regime, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gtransformer::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let corpus = generate(&SyntheticTaskSpec {
        task: Task::Coreference,
        vocab_size: 40,
        sentences: (8, 8),
        tokens: (3, 5),
        classes: 4,
        train: 2000,
        dev: 100,
        test: 100,
        seed: 7,
    })?;
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        warmup_steps: 200,
        batch_tokens: 2000,
        max_steps: steps,
        eval_every: 100,
        patience: 100,
        word_dropout: Some(0.0),
        trace_every: 0,
        ..Default::default()
    };
    for (name, source_context, target_context) in [
        ("full context", true, true),
        ("no source context", false, true),
        ("no target context", true, false),
    ] {
        let mc = ModelConfig {
            source_context,
            target_context,
            ..ModelConfig::toy(corpus.vocab.len())
        }
        .with_variant(Variant::GTransformer);
        let model = Model::new(mc, &mut ChaCha8Rng::seed_from_u64(3))?;
        let out = train(model, &corpus.train, &corpus.dev, Regime::RandomInitGtrans, None, &cfg, None)?;
        let test = evaluate(&out.model, &corpus.test)?;
        println!("{name:18} test accuracy {:.4}  loss {:.4}", test.accuracy, test.loss);
    }
    Ok(())
}
