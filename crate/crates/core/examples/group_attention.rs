//! Compares group (sentence-local) and global multi-head attention on a
//! random four-sentence input: open entries, row entropy and the gated
//! combination of both.

use gtransformer::attention::{
    combined_attention, global_mha, group_attention_mask, group_mha, scaled_attention, unmasked_entry_count,
    AttentionInputs, GateParams, HeadProjections, DEFAULT_GAMMA,
};
use gtransformer::diagnostics::entropy_bits;
use gtransformer::nnet::Tensor;
use gtransformer::tagging::GroupTagSeq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gtransformer::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (n_sent, sent_len, d, heads) = (4, 16, 32, 4);
    let tags = GroupTagSeq::new((0..n_sent * sent_len).map(|i| (i / sent_len) as u32 + 1).collect());
    let x = Tensor::normal(tags.len(), d, 1.0, &mut rng);
    let inputs = AttentionInputs::self_attention(x, tags.clone(), false);
    let n = tags.len();
    println!("{n} tokens in {n_sent} sentences");
    println!(
        "open pairs: group {} of {}, a 1/{n_sent} share",
        unmasked_entry_count(&tags, &tags),
        n * n
    );

    let local = scaled_attention(&inputs.q, &inputs.k, &inputs.v, Some(&group_attention_mask(&inputs, DEFAULT_GAMMA)), DEFAULT_GAMMA)?;
    let global = scaled_attention(&inputs.q, &inputs.k, &inputs.v, None, DEFAULT_GAMMA)?;
    let mean_entropy = |w: &Tensor| (0..w.rows()).map(|r| entropy_bits(w.row(r))).sum::<f64>() / w.rows() as f64;
    println!(
        "mean row entropy: group {:.3} bits (bound {:.3}), global {:.3} bits (bound {:.3})",
        mean_entropy(&local.weights),
        (sent_len as f64).log2(),
        mean_entropy(&global.weights),
        (n as f64).log2()
    );

    let group_heads = HeadProjections::random(d, heads, &mut rng)?;
    let global_heads = HeadProjections::random(d, heads, &mut rng)?;
    let h_local = group_mha(&inputs, &group_heads, DEFAULT_GAMMA)?;
    let h_global = global_mha(&inputs, &global_heads, DEFAULT_GAMMA)?;
    for (bias, name) in [(1e4, "gate open to local"), (-1e4, "gate open to global"), (0.0, "gate at 0.5")] {
        let h = combined_attention(&inputs, &group_heads, &global_heads, &GateParams::constant(d, bias), DEFAULT_GAMMA)?;
        println!(
            "{name:20} distance to local {:.2e}, to global {:.2e}",
            h.max_abs_diff(&h_local),
            h.max_abs_diff(&h_global)
        );
    }
    Ok(())
}
