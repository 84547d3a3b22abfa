//! Trains a G-Transformer and a document-level baseline of the same size on
//! the synthetic coreference task and compares their validation accuracy.
//!
//! ```text
//! cargo run --release --example convergence_contrast -- [steps] [out_dir]
//! ```

use gtransformer::corpus::{generate, SyntheticTaskSpec, Task};
use gtransformer::model::{Model, ModelConfig, Variant};
use gtransformer::training::{train, Regime, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gtransformer::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let out_dir = std::env::args().nth(2).map(std::path::PathBuf::from);
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
        trace_every: 100,
        ..Default::default()
    };
    for (variant, regime) in [
        (Variant::GTransformer, Regime::RandomInitGtrans),
        (Variant::BaselineTransformer, Regime::RandomInitBaseline),
    ] {
        let mc = ModelConfig::toy(corpus.vocab.len()).with_variant(variant);
        let model = Model::new(mc, &mut ChaCha8Rng::seed_from_u64(3))?;
        let t = std::time::Instant::now();
        let dir = out_dir.as_ref().map(|d| d.join(format!("{variant:?}").to_lowercase()));
        let out = train(model, &corpus.train, &corpus.dev, regime, None, &cfg, dir.as_deref())?;
        let acc = out.log.series("valid", "accuracy");
        println!("{variant:?}: {:.1}s", t.elapsed().as_secs_f64());
        let loss = out.log.series("valid", "loss");
        for ((s, a), (_, l)) in acc.iter().zip(&loss) {
            println!("  step {s:5}  valid accuracy {a:.4}  loss {l:.4}");
        }
        for (s, e) in out.log.series("valid", "entropy/cross") {
            println!("  step {s:5}  cross entropy {e:.3} bits");
        }
    }
    Ok(())
}
