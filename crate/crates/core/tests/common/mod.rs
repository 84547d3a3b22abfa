#![allow(dead_code)]

pub mod ops;
pub mod oracles;

use gtransformer::model::{Model, ModelConfig, Variant};
use gtransformer::nnet::{Graph, Tensor, Var};
use gtransformer::tagging::TokenDocument;
use gtransformer::vocab::{Markers, TokenId, NUM_SPECIAL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Document of `n_sent` sentences with 1..=max_len content tokens each.
pub fn random_doc<R: Rng>(rng: &mut R, n_sent: usize, vocab: usize, max_len: usize) -> TokenDocument {
    let sentences: Vec<Vec<TokenId>> = (0..n_sent)
        .map(|_| {
            let n = rng.random_range(1..=max_len);
            (0..n)
                .map(|_| rng.random_range(NUM_SPECIAL as TokenId..vocab as TokenId))
                .collect()
        })
        .collect();
    TokenDocument::from_sentences(&sentences, Markers::default())
}

pub fn tiny_config(vocab: usize, variant: Variant) -> ModelConfig {
    ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 8,
        d_ff: 12,
        k_combined: 1,
        dropout: 0.0,
        word_dropout: 0.0,
        ..ModelConfig::toy(vocab)
    }
    .with_variant(variant)
}

pub fn tiny_model(seed: u64, variant: Variant) -> Model {
    Model::new(tiny_config(20, variant), &mut rng(seed)).unwrap()
}

/// Central finite-difference gradient of a scalar function of one tensor.
pub fn numeric_grad(x: &Tensor, h: f64, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut grad = Tensor::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Largest `|a - n| / max(|a|, |n|, 1e-6)` over entries.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Checks `f` against central differences for every input entry. The
/// output is contracted with fixed random weights so that sums with zero
/// gradient (e.g. softmax rows) do not hide errors. Returns the largest
/// relative error.
pub fn gradient_check(inputs: &[Tensor], f: impl Fn(&mut Graph, &[Var]) -> Var) -> f64 {
    let weights = {
        let mut g = Graph::inference();
        let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
        let y = f(&mut g, &vars);
        let [r, c] = g.value(y).shape();
        Tensor::uniform(r, c, 1.0, &mut rng(99))
    };
    let objective = |g: &mut Graph, vars: &[Var]| {
        let y = f(g, vars);
        let w = g.mul_const(y, weights.clone());
        g.sum(w)
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let root = objective(&mut g, &vars);
    g.backward(root);
    let mut worst: f64 = 0.0;
    for (i, x) in inputs.iter().enumerate() {
        let analytic = g.grad(vars[i]).cloned().unwrap_or_else(|| Tensor::zeros(x.rows(), x.cols()));
        let numeric = numeric_grad(x, 1e-5, |probe| {
            let mut g = Graph::inference();
            let vars: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(j, t)| g.input(if j == i { probe.clone() } else { t.clone() }))
                .collect();
            let root = objective(&mut g, &vars);
            g.value(root).get(0, 0)
        });
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    worst
}
