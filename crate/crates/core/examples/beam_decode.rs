//! Decodes a document with beam sizes 1 and 5 and prints the hypotheses
//! with their scores. Uses a checkpoint when given, otherwise a randomly
//! initialised toy model.
//!
//! ```text
//! cargo run --release --example beam_decode -- [checkpoint vocab.txt "<s> ... </s>"]
//! ```

use std::path::Path;

use gtransformer::decoding::{beam_search_document, LengthParams};
use gtransformer::model::{Model, ModelConfig, Variant};
use gtransformer::nnet::Checkpoint;
use gtransformer::tagging::TokenDocument;
use gtransformer::vocab::Vocab;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gtransformer::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (model, vocab, line) = if let [ckpt, vocab, line] = args.as_slice() {
        let model = Model::from_checkpoint(Checkpoint::load(Path::new(ckpt))?)?;
        (model, Vocab::load(Path::new(vocab))?, line.clone())
    } else {
        let vocab = Vocab::new((0..12).map(|i| format!("w{i}")))?;
        let cfg = ModelConfig::toy(vocab.len()).with_variant(Variant::GTransformer);
        let model = Model::new(cfg, &mut ChaCha8Rng::seed_from_u64(4))?;
        (model, vocab, "<s> w1 w2 w3 </s> <s> w4 </s> <s> w5 w6 </s>".to_string())
    };
    let src = TokenDocument::new(vocab.encode_line(&line, false)?);
    println!("source   {line}");
    let len = LengthParams::default();
    for beam in [1, 5] {
        let out = beam_search_document(&src, &model, beam, &len)?;
        println!(
            "beam {beam}   {}\n         score {:.3}  normalized {:.4}{}",
            vocab.decode_line(&out.document.tokens),
            out.score,
            out.normalized_score,
            if out.truncated { "  (truncated)" } else { "" }
        );
        assert_eq!(out.document.num_sentences()?, src.num_sentences()?);
    }
    Ok(())
}
