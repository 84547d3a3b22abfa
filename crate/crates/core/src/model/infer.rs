//! Inference: encoder pass, full-prefix decode step and a cached
//! incremental decoder.

use super::{HeadIds, Model, SiteIds, Variant};
use crate::error::{Error, Result};
use crate::nnet::layers::{feed_forward_eval, position_row};
use crate::nnet::tensor::{self, log_softmax_rows, masked_softmax, sigmoid};
use crate::nnet::{Graph, Tensor};
use crate::tagging::{build_group_tags, incremental_tags, next_tag, GroupTagSeq, TokenDocument};
use crate::vocab::{Markers, TokenId};

use super::forward::Pass;

#[derive(Debug, Clone)]
struct KeyValues {
    k: Tensor,
    v: Tensor,
}

#[derive(Debug, Clone)]
struct SiteCache {
    local: KeyValues,
    global: Option<KeyValues>,
}

/// Encoder output with per-layer cross-attention keys and values.
#[derive(Debug, Clone)]
pub struct EncoderState {
    pub output: Tensor,
    pub tags: GroupTagSeq,
    cross: Vec<SiteCache>,
}

impl EncoderState {
    pub fn num_sentences(&self) -> usize {
        self.tags.num_groups()
    }
}

fn project(model: &Model, x: &Tensor, ids: &HeadIds) -> Result<KeyValues> {
    let p = model.params();
    Ok(KeyValues {
        k: x.matmul(p.get(ids.wk))?,
        v: x.matmul(p.get(ids.wv))?,
    })
}

fn project_site(model: &Model, x: &Tensor, ids: &SiteIds) -> Result<SiteCache> {
    Ok(SiteCache {
        local: project(model, x, &ids.local)?,
        global: match &ids.global {
            Some((g, _)) => Some(project(model, x, g)?),
            None => None,
        },
    })
}

/// Attention of one query row over cached keys/values, including `W^O`.
fn attend_row(
    model: &Model,
    x: &Tensor,
    ids: &HeadIds,
    kv: &KeyValues,
    mask: &Tensor,
) -> Result<Tensor> {
    let p = model.params();
    let cfg = model.config();
    let qp = x.matmul(p.get(ids.wq))?;
    let (d, n_heads) = (cfg.d_model, cfg.n_heads);
    let d_k = d / n_heads;
    let n = kv.k.rows();
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut cat = Tensor::zeros(1, d);
    for h in 0..n_heads {
        let cols = h * d_k..(h + 1) * d_k;
        let q = &qp.row(0)[cols.clone()];
        let mut scores = Tensor::zeros(1, n);
        for j in 0..n {
            let k = &kv.k.row(j)[cols.clone()];
            scores.data_mut()[j] = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
        }
        let (w, _) = masked_softmax(&scores, Some(mask), cfg.gamma);
        let out = &mut cat.row_mut(0)[cols.clone()];
        for j in 0..n {
            let wj = w.data()[j];
            for (o, v) in out.iter_mut().zip(&kv.v.row(j)[cols.clone()]) {
                *o += wj * v;
            }
        }
    }
    cat.matmul(p.get(ids.wo))
}

impl Model {
    /// Encodes a well-formed source document.
    pub fn encode(&self, src: &TokenDocument) -> Result<EncoderState> {
        let g_x = build_group_tags(src)?;
        self.encode_tokens(&src.tokens, &g_x)
    }

    pub fn encode_tokens(&self, src: &[TokenId], g_x: &GroupTagSeq) -> Result<EncoderState> {
        let mut g = Graph::inference();
        let enc = self.encode_graph(&mut g, &mut Pass::default(), src, g_x)?;
        let output = g.value(enc).clone();
        let cross = self
            .layout()
            .dec
            .iter()
            .map(|l| project_site(self, &output, &l.cross))
            .collect::<Result<_>>()?;
        Ok(EncoderState {
            output,
            tags: g_x.clone(),
            cross,
        })
    }

    /// Next-token log-probabilities after `prefix`, recomputing the whole
    /// decoder. `g_y` must equal `incremental_tags(prefix)`.
    pub fn decode_step(&self, prefix: &[TokenId], g_y: &GroupTagSeq, enc: &EncoderState) -> Result<Vec<f64>> {
        if prefix.len() != g_y.len() {
            return Err(Error::Shape(format!("{} prefix tokens, {} tags", prefix.len(), g_y.len())));
        }
        let mut g = Graph::inference();
        let encv = g.constant(enc.output.clone());
        let logits = self.decode_graph(&mut g, &mut Pass::default(), prefix, g_y, encv, &enc.tags)?;
        let last = g.value(logits).slice_rows(prefix.len() - 1, 1);
        Ok(log_softmax_rows(&last).into_data())
    }

    pub fn incremental_decoder<'a>(&'a self, enc: &'a EncoderState) -> IncrementalDecoder<'a> {
        IncrementalDecoder {
            model: self,
            enc,
            markers: Markers::default(),
            tokens: Vec::new(),
            tags: GroupTagSeq::default(),
            layers: self
                .layout()
                .dec
                .iter()
                .map(|l| SiteCache {
                    local: empty_kv(self.config().d_model),
                    global: l.self_attn.global.map(|_| empty_kv(self.config().d_model)),
                })
                .collect(),
        }
    }
}

fn empty_kv(d: usize) -> KeyValues {
    KeyValues {
        k: Tensor::zeros(0, d),
        v: Tensor::zeros(0, d),
    }
}

/// Decoder state carrying per-layer self-attention key/value caches.
///
/// Cloning is how beam search forks a hypothesis.
#[derive(Debug, Clone)]
pub struct IncrementalDecoder<'a> {
    model: &'a Model,
    enc: &'a EncoderState,
    markers: Markers,
    tokens: Vec<TokenId>,
    tags: GroupTagSeq,
    layers: Vec<SiteCache>,
}

impl IncrementalDecoder<'_> {
    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn tags(&self) -> &GroupTagSeq {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Appends `token` and returns log-probabilities of the next token.
    pub fn push(&mut self, token: TokenId) -> Result<Vec<f64>> {
        let model = self.model;
        let cfg = model.config();
        if token as usize >= cfg.vocab_size {
            return Err(Error::UnknownToken(format!("id {token}")));
        }
        let tag = if token == self.markers.pad {
            0
        } else {
            match (self.tokens.iter().rposition(|&t| t != self.markers.pad)).map(|i| (self.tokens[i], self.tags.get(i))) {
                Some((pt, ptag)) => next_tag(pt, ptag, self.markers.eos, self.markers.bos),
                None => next_tag(token, 0, self.markers.eos, self.markers.bos),
            }
        };
        let pos = self.tokens.len();
        self.tokens.push(token);
        self.tags.push(tag);
        debug_assert_eq!(self.tags, incremental_tags(&self.tokens, self.markers));

        let d = cfg.d_model;
        let params = model.params();
        let layout = model.layout();
        let table = params.get(layout.embed);
        let mut x = Tensor::zeros(1, d);
        position_row(pos, x.row_mut(0));
        let scale = (d as f64).sqrt();
        for (v, e) in x.row_mut(0).iter_mut().zip(table.row(token as usize)) {
            *v += e * scale;
        }
        let q_tag = GroupTagSeq::new(vec![tag]);
        for (l, ids) in layout.dec.iter().enumerate() {
            let cache = &mut self.layers[l];
            let new_local = project(model, &x, &ids.self_attn.local)?;
            cache.local.k.push_rows(&new_local.k);
            cache.local.v.push_rows(&new_local.v);
            if let (Some(kv), Some((gids, _))) = (cache.global.as_mut(), &ids.self_attn.global) {
                let new = project(model, &x, gids)?;
                kv.k.push_rows(&new.k);
                kv.v.push_rows(&new.v);
            }
            let a = site_row(model, &x, &ids.self_attn, cache, &q_tag, &self.tags)?;
            x = tensor::layer_norm(&x.zip_map(&a, |p, q| p + q), params.get(ids.norm1.gain), params.get(ids.norm1.bias));
            let c = site_row(model, &x, &ids.cross, &self.enc.cross[l], &q_tag, &self.enc.tags)?;
            x = tensor::layer_norm(&x.zip_map(&c, |p, q| p + q), params.get(ids.norm2.gain), params.get(ids.norm2.bias));
            let f = feed_forward_eval(
                &x,
                params.get(ids.ff.w1),
                params.get(ids.ff.b1),
                params.get(ids.ff.w2),
                params.get(ids.ff.b2),
            )?;
            x = tensor::layer_norm(&x.zip_map(&f, |p, q| p + q), params.get(ids.norm3.gain), params.get(ids.norm3.bias));
        }
        let logits = x.matmul_t(table)?;
        Ok(log_softmax_rows(&logits).into_data())
    }
}

/// One attention site for a single query row against cached keys.
fn site_row(
    model: &Model,
    x: &Tensor,
    ids: &SiteIds,
    cache: &SiteCache,
    g_q: &GroupTagSeq,
    g_k: &GroupTagSeq,
) -> Result<Tensor> {
    let gamma = model.config().gamma;
    let padding = crate::attention::key_padding_mask(g_q, g_k, gamma);
    if model.config().variant == Variant::BaselineTransformer {
        return attend_row(model, x, &ids.local, &cache.local, &padding);
    }
    let group = crate::attention::group_mask(g_q, g_k, gamma);
    let h_l = attend_row(model, x, &ids.local, &cache.local, &group)?;
    let (Some((gids, gate)), Some(kv)) = (&ids.global, &cache.global) else {
        return Ok(h_l);
    };
    let h_g = attend_row(model, x, gids, kv, &padding)?;
    let p = model.params();
    let z = tensor::add_row(&Tensor::concat_cols(&[&h_l, &h_g])?.matmul(p.get(gate.w))?, p.get(gate.b));
    let s = z.map(sigmoid);
    Ok(h_l.zip_map(&s, |a, s| a * s).zip_map(&h_g.zip_map(&s, |b, s| b * (1.0 - s)), |a, b| a + b))
}
