//! Differentiable forward pass used for training and teacher-forced scoring.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FfIds, HeadIds, Model, NormIds, SiteIds, Variant};
use crate::attention::diff::{self, GateVars, HeadVars, MhaOutput, SiteMasks};
use crate::attention::trace::{AttentionTrace, Scope, Site};
use crate::attention::{causal_mask, group_mask, key_padding_mask, sum_masks};
use crate::error::{Error, Result};
use crate::nnet::{self, sinusoidal_positions, FeedForwardVars, Graph, Var};
use crate::tagging::{build_group_tags, GroupTagSeq, TokenDocument};
use crate::vocab::{Markers, TokenId, UNK};

/// Dropout and word-dropout state for one training forward pass.
#[derive(Debug, Clone)]
pub struct TrainingNoise {
    rng: ChaCha8Rng,
    pub dropout: f64,
    pub word_dropout: f64,
}

impl TrainingNoise {
    pub fn new(seed: u64, dropout: f64, word_dropout: f64) -> Self {
        TrainingNoise {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dropout,
            word_dropout,
        }
    }
}

/// Loss node and token statistics of one teacher-forced document.
#[derive(Debug, Clone, Copy)]
pub struct DocumentLoss {
    /// Summed label-smoothed NLL over predicted positions.
    pub loss: Var,
    /// Summed plain NLL.
    pub nll: f64,
    pub tokens: usize,
    pub correct: usize,
}

pub(crate) struct Captured {
    layer: usize,
    site: Site,
    scope: Scope,
    weights: Vec<Var>,
    query_tags: Vec<u32>,
    key_tags: Vec<u32>,
}

/// Per-pass context: optional noise and optional attention capture.
#[derive(Default)]
pub(crate) struct Pass<'a> {
    pub noise: Option<&'a mut TrainingNoise>,
    pub capture: Option<Vec<Captured>>,
}

impl Pass<'_> {
    fn dropout(&mut self, g: &mut Graph, x: Var) -> Var {
        match self.noise.as_deref_mut() {
            Some(n) => {
                let p = n.dropout;
                nnet::dropout(g, x, p, Some(&mut n.rng))
            }
            None => x,
        }
    }

    fn word_dropout(&mut self, tokens: &[TokenId], markers: Markers) -> Result<Vec<TokenId>> {
        match self.noise.as_deref_mut() {
            Some(n) if n.word_dropout > 0.0 => {
                nnet::word_dropout(tokens, n.word_dropout, UNK, markers, &mut n.rng)
            }
            _ => Ok(tokens.to_vec()),
        }
    }

    fn record(&mut self, layer: usize, site: Site, scope: Scope, out: &MhaOutput, q: &GroupTagSeq, k: &GroupTagSeq) {
        if let Some(c) = self.capture.as_mut() {
            c.push(Captured {
                layer,
                site,
                scope,
                weights: out.weights.clone(),
                query_tags: q.as_slice().to_vec(),
                key_tags: k.as_slice().to_vec(),
            });
        }
    }

    /// Moves captured weights into `trace` under document index `doc`.
    pub(crate) fn drain_into(&mut self, g: &Graph, doc: usize, trace: &mut AttentionTrace) {
        for c in self.capture.take().unwrap_or_default() {
            for (h, &w) in c.weights.iter().enumerate() {
                trace.push(doc, c.layer, h, c.site, c.scope, g.value(w), &c.query_tags, &c.key_tags);
            }
        }
    }
}

impl Model {
    fn heads(&self, g: &mut Graph, ids: &HeadIds) -> HeadVars {
        let p = &self.params;
        HeadVars {
            wq: g.param(ids.wq, p.get(ids.wq)),
            wk: g.param(ids.wk, p.get(ids.wk)),
            wv: g.param(ids.wv, p.get(ids.wv)),
            wo: g.param(ids.wo, p.get(ids.wo)),
            n_heads: self.config.n_heads,
        }
    }

    fn norm(&self, g: &mut Graph, x: Var, ids: &NormIds) -> Var {
        let gain = g.param(ids.gain, self.params.get(ids.gain));
        let bias = g.param(ids.bias, self.params.get(ids.bias));
        g.layer_norm(x, gain, bias)
    }

    fn ff(&self, g: &mut Graph, x: Var, ids: &FfIds) -> Var {
        let p = &self.params;
        let vars = FeedForwardVars {
            w1: g.param(ids.w1, p.get(ids.w1)),
            b1: g.param(ids.b1, p.get(ids.b1)),
            w2: g.param(ids.w2, p.get(ids.w2)),
            b2: g.param(ids.b2, p.get(ids.b2)),
        };
        nnet::feed_forward(g, x, &vars)
    }

    /// One attention site, dispatching on variant and layer type.
    #[allow(clippy::too_many_arguments)]
    fn attention_site(
        &self,
        g: &mut Graph,
        pass: &mut Pass,
        ids: &SiteIds,
        q: Var,
        kv: Var,
        g_q: &GroupTagSeq,
        g_k: &GroupTagSeq,
        causal: bool,
        layer: usize,
        site: Site,
    ) -> Var {
        let gamma = self.config.gamma;
        let with_causal = |m| {
            if causal {
                sum_masks(&m, &causal_mask(g_q.len(), g_k.len(), gamma))
            } else {
                m
            }
        };
        let local = self.heads(g, &ids.local);
        if self.config.variant == Variant::BaselineTransformer {
            let mask = with_causal(key_padding_mask(g_q, g_k, gamma));
            let out = diff::multi_head(g, q, kv, kv, Some(&mask), &local, gamma);
            pass.record(layer, site, Scope::Global, &out, g_q, g_k);
            return out.output;
        }
        let group = with_causal(group_mask(g_q, g_k, gamma));
        match &ids.global {
            None => {
                let out = diff::multi_head(g, q, kv, kv, Some(&group), &local, gamma);
                pass.record(layer, site, Scope::Group, &out, g_q, g_k);
                out.output
            }
            Some((global_ids, gate_ids)) => {
                let global = self.heads(g, global_ids);
                let gate = GateVars {
                    w: g.param(gate_ids.w, self.params.get(gate_ids.w)),
                    b: g.param(gate_ids.b, self.params.get(gate_ids.b)),
                };
                let masks = SiteMasks {
                    group,
                    global: with_causal(key_padding_mask(g_q, g_k, gamma)),
                };
                let out = diff::combined_attention(g, q, kv, kv, &masks, &local, &global, &gate, gamma);
                pass.record(layer, site, Scope::Group, &out.local, g_q, g_k);
                pass.record(layer, site, Scope::Global, &out.global, g_q, g_k);
                out.output
            }
        }
    }

    fn embed(&self, g: &mut Graph, pass: &mut Pass, tokens: &[TokenId]) -> Result<Var> {
        let vocab = self.config.vocab_size;
        let ids: Vec<usize> = tokens
            .iter()
            .map(|&t| {
                if (t as usize) < vocab {
                    Ok(t as usize)
                } else {
                    Err(Error::UnknownToken(format!("id {t} outside vocabulary of {vocab}")))
                }
            })
            .collect::<Result<_>>()?;
        let table = g.param(self.layout.embed, self.params.get(self.layout.embed));
        let e = g.gather(table, &ids);
        let e = g.scale(e, (self.config.d_model as f64).sqrt());
        let pe = g.constant(sinusoidal_positions(tokens.len(), self.config.d_model));
        let x = g.add(e, pe);
        Ok(pass.dropout(g, x))
    }

    pub(crate) fn encode_graph(
        &self,
        g: &mut Graph,
        pass: &mut Pass,
        src: &[TokenId],
        g_x: &GroupTagSeq,
    ) -> Result<Var> {
        if src.is_empty() {
            return Err(Error::invalid("empty source document"));
        }
        if src.len() != g_x.len() {
            return Err(Error::Shape(format!("{} source tokens, {} tags", src.len(), g_x.len())));
        }
        let mut x = self.embed(g, pass, src)?;
        for (l, ids) in self.layout.enc.iter().enumerate() {
            let a = self.attention_site(g, pass, &ids.self_attn, x, x, g_x, g_x, false, l, Site::EncSelf);
            let a = pass.dropout(g, a);
            let r = g.add(x, a);
            x = self.norm(g, r, &ids.norm1);
            let f = self.ff(g, x, &ids.ff);
            let f = pass.dropout(g, f);
            let r = g.add(x, f);
            x = self.norm(g, r, &ids.norm2);
        }
        Ok(x)
    }

    /// Decoder over target inputs; returns logits `[len × vocab]`.
    pub(crate) fn decode_graph(
        &self,
        g: &mut Graph,
        pass: &mut Pass,
        tgt_in: &[TokenId],
        g_y: &GroupTagSeq,
        enc: Var,
        g_x: &GroupTagSeq,
    ) -> Result<Var> {
        if tgt_in.len() != g_y.len() {
            return Err(Error::Shape(format!("{} target tokens, {} tags", tgt_in.len(), g_y.len())));
        }
        if tgt_in.is_empty() {
            return Err(Error::invalid("empty target prefix"));
        }
        let mut y = self.embed(g, pass, tgt_in)?;
        for (l, ids) in self.layout.dec.iter().enumerate() {
            let a = self.attention_site(g, pass, &ids.self_attn, y, y, g_y, g_y, true, l, Site::DecSelf);
            let a = pass.dropout(g, a);
            let r = g.add(y, a);
            y = self.norm(g, r, &ids.norm1);
            let c = self.attention_site(g, pass, &ids.cross, y, enc, g_y, g_x, false, l, Site::Cross);
            let c = pass.dropout(g, c);
            let r = g.add(y, c);
            y = self.norm(g, r, &ids.norm2);
            let f = self.ff(g, y, &ids.ff);
            let f = pass.dropout(g, f);
            let r = g.add(y, f);
            y = self.norm(g, r, &ids.norm3);
        }
        let table = g.param(self.layout.embed, self.params.get(self.layout.embed));
        Ok(g.matmul_t(y, table))
    }

    /// Teacher-forced loss of one (possibly padded) document pair.
    ///
    /// The decoder reads `tgt[..n-1]` and predicts `tgt[1..]`; padded target
    /// positions are skipped. With `noise = None` dropout is off.
    pub fn document_loss(
        &self,
        g: &mut Graph,
        src: &TokenDocument,
        tgt: &TokenDocument,
        noise: Option<&mut TrainingNoise>,
        label_smoothing: f64,
    ) -> Result<DocumentLoss> {
        let mut pass = Pass {
            noise,
            capture: None,
        };
        self.document_loss_pass(g, &mut pass, src, tgt, label_smoothing)
    }

    pub(crate) fn document_loss_pass(
        &self,
        g: &mut Graph,
        pass: &mut Pass,
        src: &TokenDocument,
        tgt: &TokenDocument,
        label_smoothing: f64,
    ) -> Result<DocumentLoss> {
        let g_x = build_group_tags(src)?;
        let g_y = build_group_tags(tgt)?;
        if g_x.num_groups() != g_y.num_groups() {
            return Err(Error::invalid(format!(
                "source has {} sentences, target {}",
                g_x.num_groups(),
                g_y.num_groups()
            )));
        }
        let n = tgt.tokens.len();
        if n < 2 {
            return Err(Error::invalid("target document too short"));
        }
        let src_in = pass.word_dropout(&src.tokens, src.markers)?;
        let tgt_in = pass.word_dropout(&tgt.tokens[..n - 1], tgt.markers)?;
        let enc = self.encode_graph(g, pass, &src_in, &g_x)?;
        let logits = self.decode_graph(g, pass, &tgt_in, &g_y.prefix(n - 1), enc, &g_x)?;
        let targets: Vec<Option<usize>> = tgt.tokens[1..]
            .iter()
            .map(|&t| (t != tgt.markers.pad).then_some(t as usize))
            .collect();
        let loss = g.smoothed_nll(logits, &targets, label_smoothing);
        let (nll, tokens, correct) = token_stats(g.value(logits), &targets);
        Ok(DocumentLoss {
            loss,
            nll,
            tokens,
            correct,
        })
    }

    /// Teacher-forced loss with attention weights captured into `trace`.
    pub fn traced_document_loss(
        &self,
        src: &TokenDocument,
        tgt: &TokenDocument,
        doc: usize,
        trace: &mut AttentionTrace,
    ) -> Result<f64> {
        let mut g = Graph::inference();
        let mut pass = Pass {
            noise: None,
            capture: Some(Vec::new()),
        };
        let out = self.document_loss_pass(&mut g, &mut pass, src, tgt, 0.0)?;
        pass.drain_into(&g, doc, trace);
        Ok(out.nll)
    }

    /// Teacher-forced log-likelihood `Σ log p(y_t | y_<t, x)` (no smoothing,
    /// no dropout).
    pub fn log_likelihood(&self, src: &TokenDocument, tgt: &TokenDocument) -> Result<f64> {
        let mut g = Graph::inference();
        let out = self.document_loss(&mut g, src, tgt, None, 0.0)?;
        Ok(-out.nll)
    }

    /// Teacher-forced logits `[n-1 × vocab]` for a target document.
    pub fn teacher_forced_logits(&self, src: &TokenDocument, tgt: &TokenDocument) -> Result<nnet::Tensor> {
        let g_x = build_group_tags(src)?;
        let g_y = build_group_tags(tgt)?;
        let n = tgt.tokens.len();
        let mut g = Graph::inference();
        let mut pass = Pass::default();
        let enc = self.encode_graph(&mut g, &mut pass, &src.tokens, &g_x)?;
        let logits = self.decode_graph(&mut g, &mut pass, &tgt.tokens[..n - 1], &g_y.prefix(n - 1), enc, &g_x)?;
        Ok(g.value(logits).clone())
    }
}

/// `(Σ NLL, counted tokens, argmax hits)` over rows with a target.
fn token_stats(logits: &nnet::Tensor, targets: &[Option<usize>]) -> (f64, usize, usize) {
    let log_probs = nnet::tensor::log_softmax_rows(logits);
    let mut nll = 0.0;
    let mut tokens = 0;
    let mut correct = 0;
    for (r, t) in targets.iter().enumerate() {
        let Some(t) = *t else { continue };
        let row = log_probs.row(r);
        nll -= row[t];
        tokens += 1;
        let best = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
            .0;
        if best == t {
            correct += 1;
        }
    }
    (nll, tokens, correct)
}
