//! Standard layers: feed-forward, layer norm, dropout, word dropout and
//! sinusoidal positions.

use rand::Rng;

use super::graph::{Graph, Var};
use super::tensor::{self, Tensor};
use crate::error::{Error, Result};
use crate::vocab::{Markers, TokenId};

/// Feed-forward parameters bound into a graph.
#[derive(Debug, Clone, Copy)]
pub struct FeedForwardVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// `relu(x·W1 + b1)·W2 + b2`.
pub fn feed_forward(g: &mut Graph, x: Var, ff: &FeedForwardVars) -> Var {
    let h = g.matmul(x, ff.w1);
    let h = g.add_row(h, ff.b1);
    let h = g.relu(h);
    let o = g.matmul(h, ff.w2);
    g.add_row(o, ff.b2)
}

/// Plain-tensor counterpart of [`feed_forward`].
pub fn feed_forward_eval(x: &Tensor, w1: &Tensor, b1: &Tensor, w2: &Tensor, b2: &Tensor) -> Result<Tensor> {
    if x.cols() != w1.rows() || w1.cols() != w2.rows() {
        return Err(Error::Shape(format!(
            "feed-forward input {:?} with W1 {:?}, W2 {:?}",
            x.shape(),
            w1.shape(),
            w2.shape()
        )));
    }
    let h = tensor::add_row(&x.matmul(w1)?, b1).map(tensor::relu);
    Ok(tensor::add_row(&h.matmul(w2)?, b2))
}

/// Inverted dropout. With `rng == None` (evaluation) this is the identity
/// and records nothing.
pub fn dropout<R: Rng + ?Sized>(g: &mut Graph, x: Var, p: f64, rng: Option<&mut R>) -> Var {
    let Some(rng) = rng else { return x };
    if p <= 0.0 {
        return x;
    }
    let [r, c] = g.value(x).shape();
    let keep = 1.0 - p;
    let mut mask = Tensor::zeros(r, c);
    for v in mask.data_mut() {
        if rng.random::<f64>() < keep {
            *v = 1.0 / keep;
        }
    }
    g.mul_const(x, mask)
}

/// Replaces each non-marker token by `unk` with probability `p`.
pub fn word_dropout<R: Rng + ?Sized>(
    tokens: &[TokenId],
    p: f64,
    unk: TokenId,
    markers: Markers,
    rng: &mut R,
) -> Result<Vec<TokenId>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("word-dropout probability {p} outside [0, 1]")));
    }
    Ok(tokens
        .iter()
        .map(|&t| {
            if markers.is_marker(t) || p == 0.0 {
                t
            } else if p == 1.0 || rng.random::<f64>() < p {
                unk
            } else {
                t
            }
        })
        .collect())
}

/// Fixed sinusoidal encodings over flat positions `0..len`.
pub fn sinusoidal_positions(len: usize, d_model: usize) -> Tensor {
    let mut pe = Tensor::zeros(len, d_model);
    for pos in 0..len {
        position_row(pos, pe.row_mut(pos));
    }
    pe
}

/// Writes the encoding of position `pos` into `row`.
pub fn position_row(pos: usize, row: &mut [f64]) {
    let d_model = row.len();
    for i in 0..d_model / 2 {
        let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
        row[2 * i] = angle.sin();
        row[2 * i + 1] = angle.cos();
    }
    if d_model % 2 == 1 {
        row[d_model - 1] = (pos as f64 / 10000f64.powf((d_model - 1) as f64 / d_model as f64)).sin();
    }
}
