//! Independent reference implementations shared by the integration tests.

use gtransformer::model::{Model, Variant};
use gtransformer::nnet::{Graph, ParamStore, Tensor};
use gtransformer::tagging::TokenDocument;
use gtransformer::vocab::{Markers, TokenId};
use rand::Rng;

use super::{max_relative_error, numeric_grad, rng};

/// Occurrences of `gram` in `seq`, by linear scan.
fn occurrences(seq: &[TokenId], gram: &[TokenId]) -> usize {
    if gram.len() > seq.len() {
        return 0;
    }
    (0..=seq.len() - gram.len()).filter(|&i| &seq[i..i + gram.len()] == gram).count()
}

/// BLEU-4 by brute force: every candidate n-gram position is visited and
/// clipped against reference counts, with no hashing.
pub fn oracle_bleu(segments: &[(Vec<TokenId>, Vec<TokenId>)]) -> f64 {
    let (mut c_len, mut r_len) = (0usize, 0usize);
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    for (c, r) in segments {
        c_len += c.len();
        r_len += r.len();
        for n in 1..=4 {
            if c.len() < n {
                continue;
            }
            let mut counted: Vec<&[TokenId]> = Vec::new();
            for i in 0..=c.len() - n {
                let gram = &c[i..i + n];
                totals[n - 1] += 1;
                if counted.contains(&gram) {
                    continue;
                }
                counted.push(gram);
                matches[n - 1] += occurrences(c, gram).min(occurrences(r, gram));
            }
        }
    }
    if c_len == 0 {
        return if r_len == 0 { 100.0 } else { 0.0 };
    }
    let mut log_p = 0.0;
    let mut k = 0;
    for n in 0..4 {
        if totals[n] > 0 {
            let m = if matches[n] == 0 { 1e-9 } else { matches[n] as f64 };
            log_p += (m / totals[n] as f64).ln();
            k += 1;
        }
    }
    let bp = if c_len >= r_len { 1.0 } else { (1.0 - r_len as f64 / c_len as f64).exp() };
    100.0 * bp * (log_p / k as f64).exp()
}

pub fn doc(sents: &[Vec<TokenId>]) -> TokenDocument {
    TokenDocument::from_sentences(sents, Markers::default())
}

/// Reference documents and noisy candidates with matching sentence counts.
pub fn noisy_corpus(seed: u64) -> (Vec<TokenDocument>, Vec<TokenDocument>) {
    let mut r = rng(seed);
    let n_docs = r.random_range(1..=4);
    let vocab = r.random_range(5..12);
    let (mut cands, mut refs) = (Vec::new(), Vec::new());
    for _ in 0..n_docs {
        let n_sent = r.random_range(1..=4);
        let mut rs = Vec::new();
        let mut cs = Vec::new();
        for _ in 0..n_sent {
            let len = r.random_range(1..=8);
            let sent: Vec<TokenId> = (0..len).map(|_| r.random_range(4..4 + vocab)).collect();
            let mut cand: Vec<TokenId> = Vec::new();
            for &t in &sent {
                if r.random_bool(0.85) {
                    cand.push(if r.random_bool(0.2) { r.random_range(4..4 + vocab) } else { t });
                }
            }
            if r.random_bool(0.3) {
                cand.push(r.random_range(4..4 + vocab));
            }
            rs.push(sent);
            cs.push(cand);
        }
        refs.push(doc(&rs));
        cands.push(doc(&cs));
    }
    (cands, refs)
}

pub fn content(d: &TokenDocument) -> Vec<TokenId> {
    d.tokens.iter().copied().filter(|&t| !d.markers.is_marker(t)).collect()
}

/// Whole-document segments for document-level BLEU.
pub fn document_segments(cands: &[TokenDocument], refs: &[TokenDocument]) -> Vec<(Vec<TokenId>, Vec<TokenId>)> {
    cands.iter().zip(refs).map(|(c, r)| (content(c), content(r))).collect()
}

/// Aligned sentence pairs for sentence-level BLEU.
pub fn sentence_segments(cands: &[TokenDocument], refs: &[TokenDocument]) -> Vec<(Vec<TokenId>, Vec<TokenId>)> {
    let mut segs = Vec::new();
    for (c, r) in cands.iter().zip(refs) {
        segs.extend(c.sentences().unwrap().into_iter().zip(r.sentences().unwrap()));
    }
    segs
}

/// Brute-force group mask entry: open only for equal non-padding tags.
pub fn mask_entry(q: u32, k: u32, gamma: f64) -> f64 {
    if q != 0 && q == k {
        0.0
    } else {
        gamma
    }
}

/// Largest relative gradient error over every scalar parameter of `model`
/// for the label-smoothed loss of one document pair, with the name of the
/// worst parameter.
pub fn model_gradient_error(model: &Model, src: &TokenDocument, tgt: &TokenDocument) -> (String, f64) {
    let loss = |m: &Model| {
        let mut g = Graph::inference();
        let l = m.document_loss(&mut g, src, tgt, None, 0.1).unwrap();
        g.value(l.loss).get(0, 0)
    };
    let mut g = Graph::new();
    let l = model.document_loss(&mut g, src, tgt, None, 0.1).unwrap();
    g.backward(l.loss);
    let grads: std::collections::HashMap<usize, Tensor> =
        g.param_grads().into_iter().map(|(id, t)| (id, t.clone())).collect();
    let mut worst = (String::new(), 0.0f64);
    let mut probe = model.clone();
    for (id, name, value) in model.params().iter() {
        let analytic = grads.get(&id).cloned().unwrap_or_else(|| Tensor::zeros(value.rows(), value.cols()));
        let numeric = numeric_grad(value, 1e-5, |x| {
            *probe.params_mut().get_mut(id) = x.clone();
            loss(&probe)
        });
        *probe.params_mut().get_mut(id) = value.clone();
        let err = max_relative_error(&analytic, &numeric);
        if err > worst.1 {
            worst = (name.to_string(), err);
        }
    }
    worst
}

/// Baseline parameters taken from a G-Transformer by name, with
/// `rename` mapping baseline names to G-Transformer names.
pub fn baseline_from(g: &Model, rename: impl Fn(&str) -> String) -> Model {
    let cfg = g.config().clone().with_variant(Variant::BaselineTransformer);
    let shape = Model::new(cfg.clone(), &mut rng(0)).unwrap();
    let mut params = ParamStore::new();
    for (_, name, _) in shape.params().iter() {
        params.insert(name, g.param(&rename(name)).unwrap().clone()).unwrap();
    }
    Model::from_parts(cfg, params).unwrap()
}
