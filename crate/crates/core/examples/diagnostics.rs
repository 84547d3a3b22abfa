//! Traces attention on the coreference task during a short run, then
//! reports per-layer entropy at the last checkpoint and any plateaus in
//! the validation loss.
//!
//! ```text
//! cargo run --release --example diagnostics -- [steps]
//! ```

use gtransformer::attention::trace::{Scope, Site};
use gtransformer::corpus::{generate, SyntheticTaskSpec, Task};
use gtransformer::diagnostics::{attention_entropy, detect_plateau};
use gtransformer::model::{Model, ModelConfig, Variant};
use gtransformer::training::{trace_attention, train, Regime, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gtransformer::Result<()> {
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let corpus = generate(&SyntheticTaskSpec {
        task: Task::Coreference,
        vocab_size: 40,
        sentences: (4, 6),
        tokens: (3, 5),
        classes: 4,
        train: 400,
        dev: 40,
        test: 10,
        seed: 2,
    })?;
    let mc = ModelConfig::toy(corpus.vocab.len()).with_variant(Variant::GTransformer);
    let model = Model::new(mc, &mut ChaCha8Rng::seed_from_u64(1))?;
    let cfg = TrainConfig {
        warmup_steps: 100,
        batch_tokens: 1000,
        max_steps: steps,
        eval_every: 50,
        word_dropout: Some(0.0),
        trace_every: 50,
        ..Default::default()
    };
    let out = train(model, &corpus.train, &corpus.dev, Regime::RandomInitGtrans, None, &cfg, None)?;

    for site in Site::ALL {
        let series = out.entropy.series(Some(site), None);
        let text: Vec<String> = series.iter().map(|(s, e)| format!("{s}:{e:.2}")).collect();
        println!("{:8} entropy (bits) {}", site.as_str(), text.join(" "));
    }
    let snapshot = attention_entropy(&trace_attention(&out.model, &corpus.dev[..4], out.steps)?)?;
    for v in &snapshot.values {
        println!("  layer {} {:8} {:6}  {:.3} bits", v.layer, v.site.as_str(), scope_name(v.scope), v.bits);
    }
    let loss: Vec<(u64, f64)> = out.log.series("valid", "loss").into_iter().map(|(s, l)| (s, l.ln())).collect();
    println!("plateaus in log validation loss: {:?}", detect_plateau(&loss, 2, 0.05));
    Ok(())
}

fn scope_name(s: Scope) -> &'static str {
    match s {
        Scope::Group => "group",
        Scope::Global => "global",
    }
}
