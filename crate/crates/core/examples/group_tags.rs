//! Tags a two-sentence document, shows the group mask it induces and
//! checks that tagging a prefix token by token gives the same tags.
//!
//! ```text
//! cargo run --example group_tags -- "<s> a b </s> <s> c </s>"
//! ```

use gtransformer::attention::{group_mask, unmasked_entry_count, DEFAULT_GAMMA};
use gtransformer::tagging::{build_group_tags, incremental_tags, TokenDocument};
use gtransformer::vocab::{Markers, Vocab};

fn main() -> gtransformer::Result<()> {
    let line = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "<s> a b </s> <s> c </s> <pad>".to_string());
    let words: Vec<&str> = line.split_whitespace().filter(|w| !w.starts_with('<')).collect();
    let mut unique = words.clone();
    unique.sort_unstable();
    unique.dedup();
    let vocab = Vocab::new(unique)?;
    let doc = TokenDocument::new(vocab.encode_line(&line, true)?);

    let tags = build_group_tags(&doc)?;
    println!("tokens {line}");
    println!("tags   {:?}", tags.as_slice());
    for n in 1..=doc.len() {
        assert_eq!(incremental_tags(&doc.tokens[..n], Markers::default()), tags.prefix(n));
    }
    println!("every prefix tags the same way incrementally");

    let mask = group_mask(&tags, &tags, DEFAULT_GAMMA);
    println!("group mask (. open, x blocked):");
    for r in 0..mask.rows() {
        let row: String = mask.row(r).iter().map(|&v| if v == 0.0 { '.' } else { 'x' }).collect();
        println!("  {row}");
    }
    println!(
        "{} of {} query/key pairs open",
        unmasked_entry_count(&tags, &tags),
        doc.len() * doc.len()
    );
    Ok(())
}
