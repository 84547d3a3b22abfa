//! Checks reverse-mode gradients of a small attention block and of a whole
//! model against central finite differences.

use gtransformer::model::{Model, ModelConfig, Variant};
use gtransformer::nnet::{Graph, Tensor};
use gtransformer::tagging::TokenDocument;
use gtransformer::vocab::Markers;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn block_loss(g: &mut Graph, x: &Tensor, w: &Tensor) -> (f64, Option<Tensor>) {
    let xv = g.input(x.clone());
    let wv = g.input(w.clone());
    let q = g.matmul(xv, wv);
    let scores = g.matmul_t(q, xv);
    let p = g.masked_softmax(scores, None, -1e8);
    let h = g.matmul(p, xv);
    let sq = g.mul(h, h);
    let loss = g.sum(sq);
    let value = g.value(loss).get(0, 0);
    g.backward(loss);
    (value, g.grad(wv).cloned())
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn main() -> gtransformer::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Tensor::uniform(5, 4, 1.0, &mut rng);
    let w = Tensor::uniform(4, 4, 1.0, &mut rng);
    let (_, grad) = block_loss(&mut Graph::new(), &x, &w);
    let grad = grad.expect("w receives a gradient");
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..w.len() {
        let (mut up, mut down) = (w.clone(), w.clone());
        up.data_mut()[i] += h;
        down.data_mut()[i] -= h;
        let fd = (block_loss(&mut Graph::inference(), &x, &up).0 - block_loss(&mut Graph::inference(), &x, &down).0) / (2.0 * h);
        worst = worst.max(relative(grad.data()[i], fd));
    }
    println!("attention block: max relative error {worst:.2e}");

    let cfg = ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 8,
        d_ff: 16,
        dropout: 0.0,
        ..ModelConfig::toy(12)
    }
    .with_variant(Variant::GTransformer);
    let model = Model::new(cfg, &mut rng)?;
    let src = TokenDocument::from_sentences(&[vec![4, 5, 6], vec![7, 8]], Markers::default());
    let tgt = TokenDocument::from_sentences(&[vec![9, 10], vec![11, 4, 5]], Markers::default());
    let loss = |m: &Model| -> gtransformer::Result<f64> {
        let mut g = Graph::inference();
        let l = m.document_loss(&mut g, &src, &tgt, None, 0.1)?;
        Ok(g.value(l.loss).get(0, 0))
    };
    let mut g = Graph::new();
    let l = model.document_loss(&mut g, &src, &tgt, None, 0.1)?;
    g.backward(l.loss);
    let grads: std::collections::HashMap<usize, Tensor> =
        g.param_grads().into_iter().map(|(id, t)| (id, t.clone())).collect();
    let mut probe = model.clone();
    let mut worst = (String::new(), 0.0f64);
    for (id, name, value) in model.params().iter() {
        for i in 0..value.len() {
            let mut x = value.clone();
            x.data_mut()[i] += h;
            *probe.params_mut().get_mut(id) = x.clone();
            let up = loss(&probe)?;
            x.data_mut()[i] -= 2.0 * h;
            *probe.params_mut().get_mut(id) = x;
            let down = loss(&probe)?;
            let analytic = grads.get(&id).map_or(0.0, |t| t.data()[i]);
            let err = relative(analytic, (up - down) / (2.0 * h));
            if err > worst.1 {
                worst = (name.to_string(), err);
            }
        }
        *probe.params_mut().get_mut(id) = value.clone();
    }
    println!(
        "two-layer model, {} parameters: max relative error {:.2e} in {}",
        model.params().iter().map(|(_, _, t)| t.len()).sum::<usize>(),
        worst.1,
        worst.0
    );
    Ok(())
}
