//! Differentiable attention blocks recorded on a [`Graph`].

use crate::nnet::{Graph, Tensor, Var};

/// Head projections bound into a graph.
#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub n_heads: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct GateVars {
    pub w: Var,
    pub b: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct Attended {
    pub output: Var,
    pub weights: Var,
}

/// Multi-head output plus the per-head post-softmax weights.
#[derive(Debug, Clone)]
pub struct MhaOutput {
    pub output: Var,
    pub weights: Vec<Var>,
}

/// Masks for the two branches of a combined attention site.
#[derive(Debug, Clone)]
pub struct SiteMasks {
    pub group: Tensor,
    pub global: Tensor,
}

#[derive(Debug, Clone)]
pub struct CombinedOutput {
    pub output: Var,
    pub local: MhaOutput,
    pub global: MhaOutput,
    pub gate: Var,
}

/// `softmax(q·kᵀ/√d_k + mask)·v` with `d_k` the width of `q`.
pub fn scaled_attention(
    g: &mut Graph,
    q: Var,
    k: Var,
    v: Var,
    mask: Option<&Tensor>,
    gamma: f64,
) -> Attended {
    let d_k = g.value(q).cols() as f64;
    let raw = g.matmul_t(q, k);
    let scores = g.scale(raw, 1.0 / d_k.sqrt());
    let weights = g.masked_softmax(scores, mask, gamma);
    let output = g.matmul(weights, v);
    Attended { output, weights }
}

/// Attention over already projected queries/keys/values (`[len × d_model]`
/// each, heads side by side), followed by the output projection.
#[allow(clippy::too_many_arguments)]
pub fn attend_projected(
    g: &mut Graph,
    qp: Var,
    kp: Var,
    vp: Var,
    mask: Option<&Tensor>,
    wo: Var,
    n_heads: usize,
    gamma: f64,
) -> MhaOutput {
    let d_model = g.value(qp).cols();
    let d_k = d_model / n_heads;
    let mut heads = Vec::with_capacity(n_heads);
    let mut weights = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let (qh, kh, vh) = if n_heads == 1 {
            (qp, kp, vp)
        } else {
            (
                g.slice_cols(qp, h * d_k, d_k),
                g.slice_cols(kp, h * d_k, d_k),
                g.slice_cols(vp, h * d_k, d_k),
            )
        };
        let att = scaled_attention(g, qh, kh, vh, mask, gamma);
        heads.push(att.output);
        weights.push(att.weights);
    }
    let cat = if n_heads == 1 {
        heads[0]
    } else {
        g.concat_cols(&heads)
    };
    let output = g.matmul(cat, wo);
    MhaOutput { output, weights }
}

pub fn multi_head(
    g: &mut Graph,
    q: Var,
    k: Var,
    v: Var,
    mask: Option<&Tensor>,
    heads: &HeadVars,
    gamma: f64,
) -> MhaOutput {
    let qp = g.matmul(q, heads.wq);
    let kp = g.matmul(k, heads.wk);
    let vp = g.matmul(v, heads.wv);
    attend_projected(g, qp, kp, vp, mask, heads.wo, heads.n_heads, gamma)
}

/// `H = H_L ⊙ σ([H_L, H_G]·W + b) + H_G ⊙ (1 − σ(…))`; returns `(H, gate)`.
pub fn gate_sum(g: &mut Graph, h_local: Var, h_global: Var, gate: &GateVars) -> (Var, Var) {
    let cat = g.concat_cols(&[h_local, h_global]);
    let z = g.matmul(cat, gate.w);
    let z = g.add_row(z, gate.b);
    let s = g.sigmoid(z);
    let neg = g.scale(s, -1.0);
    let complement = g.add_scalar(neg, 1.0);
    let a = g.mul(h_local, s);
    let b = g.mul(h_global, complement);
    (g.add(a, b), s)
}

#[allow(clippy::too_many_arguments)]
pub fn combined_attention(
    g: &mut Graph,
    q: Var,
    k: Var,
    v: Var,
    masks: &SiteMasks,
    local: &HeadVars,
    global: &HeadVars,
    gate: &GateVars,
    gamma: f64,
) -> CombinedOutput {
    let local_out = multi_head(g, q, k, v, Some(&masks.group), local, gamma);
    let global_out = multi_head(g, q, k, v, Some(&masks.global), global, gamma);
    let (output, s) = gate_sum(g, local_out.output, global_out.output, gate);
    CombinedOutput {
        output,
        local: local_out,
        global: global_out,
        gate: s,
    }
}
