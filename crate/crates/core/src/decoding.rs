//! Whole-document beam search with per-sentence length caps.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EncoderState, IncrementalDecoder, Model};
use crate::tagging::{build_group_tags, GroupTagSeq, TokenDocument};
use crate::vocab::{Markers, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LengthParams {
    /// Target sentence cap is `a · source_len + b` content tokens.
    pub a: f64,
    pub b: usize,
    /// Length-normalisation exponent.
    pub alpha: f64,
}

impl Default for LengthParams {
    fn default() -> Self {
        LengthParams {
            a: 2.0,
            b: 10,
            alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamHypothesis {
    pub tokens: Vec<TokenId>,
    pub tags: GroupTagSeq,
    /// Cumulative log-probability.
    pub score: f64,
    /// Content tokens in the open sentence.
    pub current_sentence_len: usize,
    pub finished: bool,
}

/// `score / len^alpha`.
pub fn length_normalized_score(hyp: &BeamHypothesis, alpha: f64) -> f64 {
    normalized(hyp.score, hyp.tokens.len(), alpha)
}

fn normalized(score: f64, len: usize, alpha: f64) -> f64 {
    if alpha == 0.0 || len == 0 {
        score
    } else {
        score / (len as f64).powf(alpha)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    pub document: TokenDocument,
    pub score: f64,
    pub normalized_score: f64,
    /// No hypothesis finished; `document` is the best partial one.
    pub truncated: bool,
}

struct Live<'a> {
    hyp: BeamHypothesis,
    dec: IncrementalDecoder<'a>,
    next: Vec<f64>,
    sentences_closed: usize,
}

struct Finished {
    hyp: BeamHypothesis,
    step: usize,
}

fn better(a: &Finished, b: &Finished, alpha: f64) -> Ordering {
    let (na, nb) = (length_normalized_score(&a.hyp, alpha), length_normalized_score(&b.hyp, alpha));
    nb.total_cmp(&na)
        .then(a.step.cmp(&b.step))
        .then_with(|| a.hyp.tokens.cmp(&b.hyp.tokens))
}

/// Tokens allowed after `live`: a single forced token or the open set.
fn allowed(live: &Live, caps: &[usize], markers: Markers, vocab: usize) -> Vec<TokenId> {
    let last = *live.hyp.tokens.last().expect("hypotheses start with <s>");
    if last == markers.eos {
        return vec![markers.bos];
    }
    let k = live.sentences_closed;
    if live.hyp.current_sentence_len >= caps[k] {
        return vec![markers.eos];
    }
    (0..vocab as TokenId)
        .filter(|&t| t != markers.bos && t != markers.pad)
        .collect()
}

/// Translates `src` as one sequence, keeping the target sentence count equal
/// to the source count.
pub fn beam_search_document(
    src: &TokenDocument,
    model: &Model,
    beam_size: usize,
    len: &LengthParams,
) -> Result<DecodeOutput> {
    if beam_size == 0 {
        return Err(Error::invalid("beam size must be at least 1"));
    }
    let g_x = build_group_tags(src)?;
    let enc = model.encode_tokens(&src.tokens, &g_x)?;
    let caps: Vec<usize> = g_x
        .spans()
        .iter()
        .map(|r| (len.a * (r.len() - 2) as f64).floor() as usize + len.b)
        .collect();
    let mut finished = search(model, &enc, &caps, beam_size, src.markers)?;
    if beam_size > 1 {
        finished.extend(search(model, &enc, &caps, 1, src.markers)?);
    }
    finished.sort_by(|a, b| better(a, b, len.alpha));
    let best = finished.into_iter().next().ok_or_else(|| Error::invalid("beam search produced nothing"))?;
    Ok(DecodeOutput {
        normalized_score: length_normalized_score(&best.hyp, len.alpha),
        score: best.hyp.score,
        truncated: !best.hyp.finished,
        document: TokenDocument::with_markers(best.hyp.tokens, src.markers),
    })
}

fn search(
    model: &Model,
    enc: &EncoderState,
    caps: &[usize],
    beam_size: usize,
    markers: Markers,
) -> Result<Vec<Finished>> {
    let n_sent = caps.len();
    let vocab = model.config().vocab_size;
    let mut dec = model.incremental_decoder(enc);
    let next = dec.push(markers.bos)?;
    let mut live = vec![Live {
        hyp: BeamHypothesis {
            tokens: vec![markers.bos],
            tags: dec.tags().clone(),
            score: 0.0,
            current_sentence_len: 0,
            finished: false,
        },
        dec,
        next,
        sentences_closed: 0,
    }];
    let mut finished: Vec<Finished> = Vec::new();
    let max_steps: usize = caps.iter().map(|c| c + 2).sum();
    for step in 1..=max_steps {
        // (score, parent, token)
        let mut cands: Vec<(f64, usize, TokenId)> = Vec::new();
        for (pi, l) in live.iter().enumerate() {
            let mut opts: Vec<(f64, TokenId)> = allowed(l, caps, markers, vocab)
                .into_iter()
                .map(|t| (l.hyp.score + l.next[t as usize], t))
                .collect();
            opts.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            opts.truncate(beam_size);
            cands.extend(opts.into_iter().map(|(s, t)| (s, pi, t)));
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut next_live = Vec::with_capacity(beam_size);
        for (score, pi, tok) in cands {
            if next_live.len() >= beam_size {
                break;
            }
            let parent = &live[pi];
            let mut hyp = parent.hyp.clone();
            let mut closed = parent.sentences_closed;
            hyp.tokens.push(tok);
            hyp.score = score;
            if tok == markers.eos {
                closed += 1;
            } else if tok == markers.bos {
                hyp.current_sentence_len = 0;
            } else {
                hyp.current_sentence_len += 1;
            }
            if tok == markers.eos && closed == n_sent {
                let last = hyp.tags.get(hyp.tags.len() - 1);
                hyp.tags.push(last);
                hyp.finished = true;
                finished.push(Finished { hyp, step });
                continue;
            }
            let mut dec = parent.dec.clone();
            let next = dec.push(tok)?;
            hyp.tags = dec.tags().clone();
            next_live.push(Live {
                hyp,
                dec,
                next,
                sentences_closed: closed,
            });
        }
        live = next_live;
        if live.is_empty() || finished.len() >= beam_size {
            break;
        }
    }
    if finished.is_empty() {
        finished.extend(live.into_iter().map(|l| Finished {
            hyp: l.hyp,
            step: usize::MAX,
        }));
    }
    Ok(finished)
}

/// Decodes documents in parallel, preserving order.
pub fn decode_corpus(model: &Model, docs: &[TokenDocument], beam_size: usize, len: &LengthParams) -> Result<Vec<DecodeOutput>> {
    docs.par_iter()
        .map(|d| beam_search_document(d, model, beam_size, len))
        .collect()
}
