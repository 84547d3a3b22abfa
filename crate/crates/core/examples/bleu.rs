//! Scores a toy two-document corpus with document-level and
//! sentence-level BLEU.

use gtransformer::metrics::{corpus_bleu, d_bleu, s_bleu};
use gtransformer::tagging::TokenDocument;
use gtransformer::vocab::Vocab;

fn main() -> gtransformer::Result<()> {
    let refs = [
        "<s> the cat sat on the mat </s> <s> it was warm </s>",
        "<s> a dog ran </s> <s> the dog barked at the cat </s>",
    ];
    let cands = [
        "<s> the cat sat on a mat </s> <s> it was warm </s>",
        "<s> a dog ran fast </s> <s> the dog barked </s>",
    ];
    let mut words: Vec<&str> = refs.iter().chain(&cands).flat_map(|l| l.split_whitespace()).filter(|w| !w.starts_with('<')).collect();
    words.sort_unstable();
    words.dedup();
    let vocab = Vocab::new(words)?;
    let parse = |lines: &[&str]| -> gtransformer::Result<Vec<TokenDocument>> {
        lines.iter().map(|l| Ok(TokenDocument::new(vocab.encode_line(l, true)?))).collect()
    };
    let (c, r) = (parse(&cands)?, parse(&refs)?);
    let d = d_bleu(&c, &r)?;
    let s = s_bleu(&c, &r)?;
    println!("d-BLEU {:.2}  precisions {:?}  BP {:.4}", d.score, d.precisions, d.brevity_penalty);
    println!("s-BLEU {:.2}  precisions {:?}  BP {:.4}", s.score, s.precisions, s.brevity_penalty);
    println!("identical corpus: d-BLEU {:.1}", d_bleu(&r, &r)?.score);

    let words = |s: &'static str| s.split_whitespace().collect::<Vec<_>>();
    let hand = corpus_bleu(&[(words("a b c d e").as_slice(), words("a b c x e y").as_slice())]);
    println!("string segments: {:.4} with matches {:?} of {:?}", hand.score, hand.matches, hand.totals);
    Ok(())
}
