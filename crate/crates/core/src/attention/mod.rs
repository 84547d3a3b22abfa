//! Attention: scaled dot-product, multi-head, sentence-local (group)
//! attention and the gated local/global combination.
//!
//! The functions at this level take and return plain [`Tensor`]s. The
//! differentiable building blocks used by the model live in [`diff`].

pub mod diff;
pub mod trace;

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nnet::{Graph, Tensor};
use crate::tagging::GroupTagSeq;

/// Additive mask value for blocked query/key pairs.
pub const DEFAULT_GAMMA: f64 = -1e8;

/// Queries, keys, values and their group tags.
#[derive(Debug, Clone)]
pub struct AttentionInputs {
    pub q: Tensor,
    pub k: Tensor,
    pub v: Tensor,
    pub g_q: GroupTagSeq,
    pub g_k: GroupTagSeq,
    /// Decoder self-attention: query `i` may not see later keys.
    pub causal: bool,
}

impl AttentionInputs {
    pub fn self_attention(x: Tensor, tags: GroupTagSeq, causal: bool) -> Self {
        AttentionInputs {
            q: x.clone(),
            k: x.clone(),
            v: x,
            g_q: tags.clone(),
            g_k: tags,
            causal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.g_q.len() != self.q.rows() {
            return Err(Error::Shape(format!(
                "{} query tags for {} queries",
                self.g_q.len(),
                self.q.rows()
            )));
        }
        if self.g_k.len() != self.k.rows() || self.k.rows() != self.v.rows() {
            return Err(Error::Shape(format!(
                "{} key tags, {} keys, {} values",
                self.g_k.len(),
                self.k.rows(),
                self.v.rows()
            )));
        }
        Ok(())
    }
}

/// Per-head projections stored side by side: head `i` owns columns
/// `[i·d_k, (i+1)·d_k)` of `wq`, `wk`, `wv` and rows `[i·d_k, (i+1)·d_k)`
/// of `wo`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadProjections {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub n_heads: usize,
}

impl HeadProjections {
    pub fn new(wq: Tensor, wk: Tensor, wv: Tensor, wo: Tensor, n_heads: usize) -> Result<Self> {
        let h = HeadProjections {
            wq,
            wk,
            wv,
            wo,
            n_heads,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn random<R: Rng + ?Sized>(d_model: usize, n_heads: usize, rng: &mut R) -> Result<Self> {
        Self::new(
            Tensor::xavier(d_model, d_model, rng),
            Tensor::xavier(d_model, d_model, rng),
            Tensor::xavier(d_model, d_model, rng),
            Tensor::xavier(d_model, d_model, rng),
            n_heads,
        )
    }

    pub fn d_model(&self) -> usize {
        self.wq.rows()
    }

    pub fn d_k(&self) -> usize {
        self.wq.cols() / self.n_heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.wq.rows();
        if self.n_heads == 0 || !d.is_multiple_of(self.n_heads) {
            return Err(Error::Shape(format!(
                "{} heads do not divide d_model {d}",
                self.n_heads
            )));
        }
        for (name, w) in [("W^Q", &self.wq), ("W^K", &self.wk), ("W^V", &self.wv)] {
            if w.shape() != [d, d] {
                return Err(Error::Shape(format!("{name} is {:?}, want [{d}, {d}]", w.shape())));
            }
        }
        if self.wo.shape() != [d, d] {
            return Err(Error::Shape(format!("W^O is {:?}, want [{d}, {d}]", self.wo.shape())));
        }
        Ok(())
    }

    /// Binds the projections as differentiable graph inputs.
    pub fn bind(&self, g: &mut Graph) -> diff::HeadVars {
        diff::HeadVars {
            wq: g.input(self.wq.clone()),
            wk: g.input(self.wk.clone()),
            wv: g.input(self.wv.clone()),
            wo: g.input(self.wo.clone()),
            n_heads: self.n_heads,
        }
    }
}

/// Gate-sum parameters: `w` is `[2·d_model × d_model]`, `b` is `[1 × d_model]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub w: Tensor,
    pub b: Tensor,
}

impl GateParams {
    pub fn new(w: Tensor, b: Tensor) -> Result<Self> {
        let d = b.cols();
        if w.shape() != [2 * d, d] || b.rows() != 1 {
            return Err(Error::Shape(format!(
                "gate W {:?} / b {:?} inconsistent",
                w.shape(),
                b.shape()
            )));
        }
        Ok(GateParams { w, b })
    }

    /// `W = 0` with every bias entry equal to `bias`.
    pub fn constant(d_model: usize, bias: f64) -> Self {
        GateParams {
            w: Tensor::zeros(2 * d_model, d_model),
            b: Tensor::full(1, d_model, bias),
        }
    }

    pub fn random<R: Rng + ?Sized>(d_model: usize, rng: &mut R) -> Self {
        GateParams {
            w: Tensor::xavier(2 * d_model, d_model, rng),
            b: Tensor::zeros(1, d_model),
        }
    }

    pub fn bind(&self, g: &mut Graph) -> diff::GateVars {
        diff::GateVars {
            w: g.input(self.w.clone()),
            b: g.input(self.b.clone()),
        }
    }
}

/// `M(G_Q, G_K)`: `0` where query and key share a non-zero tag, `gamma`
/// elsewhere. Tag 0 (padding) is blocked against everything.
pub fn group_mask(g_q: &GroupTagSeq, g_k: &GroupTagSeq, gamma: f64) -> Tensor {
    let (q, k) = (g_q.as_slice(), g_k.as_slice());
    let mut m = Tensor::zeros(q.len(), k.len());
    for (i, &a) in q.iter().enumerate() {
        for (v, &b) in m.row_mut(i).iter_mut().zip(k) {
            if a == 0 || a != b {
                *v = gamma;
            }
        }
    }
    m
}

/// Blocks padding keys (tag 0) for every query.
pub fn key_padding_mask(g_q: &GroupTagSeq, g_k: &GroupTagSeq, gamma: f64) -> Tensor {
    let k = g_k.as_slice();
    let mut m = Tensor::zeros(g_q.len(), k.len());
    for i in 0..g_q.len() {
        for (v, &b) in m.row_mut(i).iter_mut().zip(k) {
            if b == 0 {
                *v = gamma;
            }
        }
    }
    m
}

/// Blocks key `j` for query `i` when `j > i + (len_k - len_q)`, i.e. the
/// queries are the last `len_q` positions of the key sequence.
pub fn causal_mask(len_q: usize, len_k: usize, gamma: f64) -> Tensor {
    assert!(len_k >= len_q, "causal queries must be a suffix of the keys");
    let offset = len_k - len_q;
    let mut m = Tensor::zeros(len_q, len_k);
    for i in 0..len_q {
        for v in &mut m.row_mut(i)[i + offset + 1..] {
            *v = gamma;
        }
    }
    m
}

/// Element-wise sum of additive masks.
pub fn sum_masks(a: &Tensor, b: &Tensor) -> Tensor {
    a.zip_map(b, |x, y| x + y)
}

/// Number of query/key pairs left open by [`group_mask`]:
/// `Σ_k |{i: g_q[i]=k}| · |{j: g_k[j]=k}|` over non-zero tags `k`.
pub fn unmasked_entry_count(g_q: &GroupTagSeq, g_k: &GroupTagSeq) -> usize {
    let mut keys: HashMap<u32, usize> = HashMap::new();
    for &t in g_k.as_slice().iter().filter(|&&t| t != 0) {
        *keys.entry(t).or_default() += 1;
    }
    g_q.as_slice()
        .iter()
        .filter(|&&t| t != 0)
        .map(|t| keys.get(t).copied().unwrap_or(0))
        .sum()
}

/// Result of a single attention call.
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub output: Tensor,
    /// Post-softmax weights `[len_q × len_k]`.
    pub weights: Tensor,
    /// Rows that were entirely masked and replaced by a uniform distribution.
    pub fully_masked: Vec<usize>,
}

fn warn_masked(rows: &[usize]) {
    if !rows.is_empty() {
        log::warn!("{} fully masked attention rows {:?} fell back to uniform weights", rows.len(), rows);
    }
}

fn masked_rows(weights: &Tensor, mask: Option<&Tensor>, gamma: f64) -> Vec<usize> {
    let Some(mask) = mask else { return Vec::new() };
    (0..weights.rows())
        .filter(|&r| {
            mask.cols() > 0
                && mask
                    .row(r)
                    .iter()
                    .all(|&v| crate::nnet::tensor::is_masked(v, gamma))
        })
        .collect()
}

/// `softmax(QKᵀ/√d_k + mask)·V` where `d_k` is the width of `Q`.
pub fn scaled_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    extra_mask: Option<&Tensor>,
    gamma: f64,
) -> Result<AttentionOutput> {
    if q.cols() != k.cols() || k.rows() != v.rows() {
        return Err(Error::Shape(format!(
            "Q {:?}, K {:?}, V {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    if let Some(m) = extra_mask {
        if m.shape() != [q.rows(), k.rows()] {
            return Err(Error::Shape(format!("mask {:?}", m.shape())));
        }
    }
    let mut g = Graph::inference();
    let (qv, kv, vv) = (g.constant(q.clone()), g.constant(k.clone()), g.constant(v.clone()));
    let att = diff::scaled_attention(&mut g, qv, kv, vv, extra_mask, gamma);
    let weights = g.value(att.weights).clone();
    let fully_masked = masked_rows(&weights, extra_mask, gamma);
    warn_masked(&fully_masked);
    Ok(AttentionOutput {
        output: g.value(att.output).clone(),
        weights,
        fully_masked,
    })
}

fn check_heads(q: &Tensor, k: &Tensor, v: &Tensor, heads: &HeadProjections) -> Result<()> {
    heads.validate()?;
    let d = heads.d_model();
    if q.cols() != d || k.cols() != d || v.cols() != d || k.rows() != v.rows() {
        return Err(Error::Shape(format!(
            "inputs Q {:?}, K {:?}, V {:?} for d_model {d}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    Ok(())
}

/// `Concat(head_1..head_h)·W^O` with `head_i = Attention(QW_i^Q, KW_i^K, VW_i^V)`.
pub fn multi_head(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    extra_mask: Option<&Tensor>,
    heads: &HeadProjections,
    gamma: f64,
) -> Result<Tensor> {
    check_heads(q, k, v, heads)?;
    let mut g = Graph::inference();
    let (qv, kv, vv) = (g.constant(q.clone()), g.constant(k.clone()), g.constant(v.clone()));
    let hv = heads.bind(&mut g);
    let out = diff::multi_head(&mut g, qv, kv, vv, extra_mask, &hv, gamma);
    if g.fully_masked_rows() > 0 {
        log::warn!("{} fully masked attention rows", g.fully_masked_rows());
    }
    Ok(g.value(out.output).clone())
}

/// The mask used by group attention: group mask plus causal mask if flagged.
pub fn group_attention_mask(inputs: &AttentionInputs, gamma: f64) -> Tensor {
    let m = group_mask(&inputs.g_q, &inputs.g_k, gamma);
    if inputs.causal {
        sum_masks(&m, &causal_mask(inputs.q.rows(), inputs.k.rows(), gamma))
    } else {
        m
    }
}

/// The mask used by global attention: key padding plus causal mask if flagged.
pub fn global_attention_mask(inputs: &AttentionInputs, gamma: f64) -> Tensor {
    let m = key_padding_mask(&inputs.g_q, &inputs.g_k, gamma);
    if inputs.causal {
        sum_masks(&m, &causal_mask(inputs.q.rows(), inputs.k.rows(), gamma))
    } else {
        m
    }
}

/// Multi-head attention restricted to same-sentence query/key pairs.
pub fn group_mha(inputs: &AttentionInputs, heads: &HeadProjections, gamma: f64) -> Result<Tensor> {
    inputs.validate()?;
    let mask = group_attention_mask(inputs, gamma);
    multi_head(&inputs.q, &inputs.k, &inputs.v, Some(&mask), heads, gamma)
}

/// Unrestricted multi-head attention (padding and causality still apply).
pub fn global_mha(inputs: &AttentionInputs, heads: &HeadProjections, gamma: f64) -> Result<Tensor> {
    inputs.validate()?;
    let mask = global_attention_mask(inputs, gamma);
    multi_head(&inputs.q, &inputs.k, &inputs.v, Some(&mask), heads, gamma)
}

/// Gate-sum of group and global attention:
/// `H = H_L ⊙ g + H_G ⊙ (1 − g)`, `g = σ([H_L, H_G]·W + b)`.
pub fn combined_attention(
    inputs: &AttentionInputs,
    group_heads: &HeadProjections,
    global_heads: &HeadProjections,
    gate: &GateParams,
    gamma: f64,
) -> Result<Tensor> {
    inputs.validate()?;
    check_heads(&inputs.q, &inputs.k, &inputs.v, group_heads)?;
    check_heads(&inputs.q, &inputs.k, &inputs.v, global_heads)?;
    if gate.b.cols() != group_heads.d_model() {
        return Err(Error::Shape("gate width differs from d_model".into()));
    }
    let mut g = Graph::inference();
    let q = g.constant(inputs.q.clone());
    let k = g.constant(inputs.k.clone());
    let v = g.constant(inputs.v.clone());
    let local = group_heads.bind(&mut g);
    let global = global_heads.bind(&mut g);
    let gv = gate.bind(&mut g);
    let masks = diff::SiteMasks {
        group: group_attention_mask(inputs, gamma),
        global: global_attention_mask(inputs, gamma),
    };
    let out = diff::combined_attention(&mut g, q, k, v, &masks, &local, &global, &gv, gamma);
    Ok(g.value(out.output).clone())
}
