//! Generates one small corpus per synthetic task, prints a document pair
//! from each and optionally writes the corpora to disk.
//!
//! ```text
//! cargo run --example corpus_gen -- [out_dir]
//! ```

use gtransformer::corpus::{generate, SyntheticTaskSpec, Task};

fn main() -> gtransformer::Result<()> {
    let out_dir = std::env::args().nth(1).map(std::path::PathBuf::from);
    for task in [Task::Copy, Task::Substitution, Task::Reversal, Task::Coreference] {
        let corpus = generate(&SyntheticTaskSpec {
            task,
            vocab_size: 24,
            sentences: (2, 3),
            tokens: (2, 4),
            train: 20,
            dev: 5,
            test: 5,
            seed: 1,
            ..Default::default()
        })?;
        let pair = &corpus.train[0];
        println!("{task:?}");
        println!("  src {}", corpus.vocab.decode_line(&pair.src.tokens));
        println!("  tgt {}", corpus.vocab.decode_line(&pair.tgt.tokens));
        if let Some(dir) = &out_dir {
            let dir = dir.join(format!("{task:?}").to_lowercase());
            corpus.save(&dir)?;
            println!("  written to {}", dir.display());
        }
    }
    Ok(())
}
