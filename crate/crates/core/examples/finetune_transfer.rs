//! Trains a sentence-level baseline on single sentences, transfers its
//! weights into a G-Transformer and fine-tunes on whole documents with
//! separate learning rates for transferred and fresh parameters.
//!
//! ```text
//! cargo run --release --example finetune_transfer -- [sentence_steps] [doc_steps]
//! ```

use gtransformer::corpus::{generate, split_pair, DocPair, SyntheticTaskSpec, Task};
use gtransformer::model::{transfer_from_sentence_model, Model, ModelConfig, ParamGroup, Variant};
use gtransformer::training::{evaluate, train, Regime, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sentences(docs: &[DocPair]) -> gtransformer::Result<Vec<DocPair>> {
    let mut out = Vec::new();
    for d in docs {
        out.extend(split_pair(d, 1)?);
    }
    Ok(out)
}

fn main() -> gtransformer::Result<()> {
    let arg = |i: usize, default: u64| std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let (sentence_steps, doc_steps) = (arg(1, 300), arg(2, 300));
    let corpus = generate(&SyntheticTaskSpec {
        task: Task::Substitution,
        vocab_size: 30,
        sentences: (3, 6),
        tokens: (3, 6),
        train: 300,
        dev: 30,
        test: 30,
        seed: 5,
        ..Default::default()
    })?;
    let toy = ModelConfig::toy(corpus.vocab.len());
    let cfg = |max_steps| TrainConfig {
        warmup_steps: 100,
        batch_tokens: 1000,
        max_steps,
        eval_every: 100,
        word_dropout: Some(0.0),
        trace_every: 0,
        ..Default::default()
    };
    let (train_s, dev_s) = (sentences(&corpus.train)?, sentences(&corpus.dev)?);
    let baseline = Model::new(toy.clone().with_variant(Variant::BaselineTransformer), &mut ChaCha8Rng::seed_from_u64(1))?;
    let sent = train(baseline, &train_s, &dev_s, Regime::RandomInitBaseline, None, &cfg(sentence_steps), None)?;
    println!("sentence model: test accuracy {:.4}", evaluate(&sent.model, &corpus.test)?.accuracy);

    let fresh = Model::new(toy.with_variant(Variant::GTransformer), &mut ChaCha8Rng::seed_from_u64(2))?;
    let (model, partition) = transfer_from_sentence_model(&sent.model, &fresh)?;
    println!(
        "transferred {} scalars, {} fresh",
        partition.scalar_count(model.params(), ParamGroup::Transferred),
        partition.scalar_count(model.params(), ParamGroup::Fresh)
    );
    println!("before fine-tuning: test accuracy {:.4}", evaluate(&model, &corpus.test)?.accuracy);
    let tuned = train(model, &corpus.train, &corpus.dev, Regime::FinetuneGtrans, Some(&partition), &cfg(doc_steps), None)?;
    println!("after fine-tuning:  test accuracy {:.4}", evaluate(&tuned.model, &corpus.test)?.accuracy);
    Ok(())
}
