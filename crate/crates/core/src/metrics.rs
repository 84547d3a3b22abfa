//! Corpus BLEU-4 over whole documents (d-BLEU) or aligned sentences
//! (s-BLEU).

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tagging::TokenDocument;
use crate::vocab::TokenId;

pub const MAX_ORDER: usize = 4;
/// Numerator used for an n-gram order with no matches.
pub const ZERO_PRECISION_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    /// In `[0, 100]`.
    pub score: f64,
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub candidate_len: usize,
    pub reference_len: usize,
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
}

fn ngram_counts<T: Eq + Hash + Clone>(seq: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if seq.len() >= n {
        for w in seq.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Corpus BLEU over `(candidate, reference)` segments.
///
/// Orders with no candidate n-grams at all are left out of the geometric
/// mean; orders with n-grams but no matches use
/// [`ZERO_PRECISION_EPSILON`] as the match count.
pub fn corpus_bleu<T: Eq + Hash + Clone>(segments: &[(&[T], &[T])]) -> BleuReport {
    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let (mut c_len, mut r_len) = (0, 0);
    for (cand, reference) in segments {
        c_len += cand.len();
        r_len += reference.len();
        for n in 1..=MAX_ORDER {
            let rc = ngram_counts(reference, n);
            for (g, &c) in &ngram_counts(cand, n) {
                let clipped = c.min(rc.get(g).copied().unwrap_or(0));
                debug_assert!(clipped <= rc.get(g).copied().unwrap_or(0));
                matches[n - 1] += clipped;
            }
            totals[n - 1] += cand.len().saturating_sub(n - 1);
        }
    }
    let mut precisions = [0.0; MAX_ORDER];
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 0..MAX_ORDER {
        if totals[n] == 0 {
            continue;
        }
        let m = if matches[n] == 0 {
            ZERO_PRECISION_EPSILON
        } else {
            matches[n] as f64
        };
        precisions[n] = m / totals[n] as f64;
        log_sum += precisions[n].ln();
        orders += 1;
    }
    let brevity_penalty = if c_len == 0 {
        0.0
    } else if c_len >= r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    let score = if orders == 0 {
        if c_len == 0 && r_len == 0 {
            100.0
        } else {
            0.0
        }
    } else {
        (brevity_penalty * (log_sum / orders as f64).exp() * 100.0).clamp(0.0, 100.0)
    };
    BleuReport {
        score,
        precisions,
        brevity_penalty,
        candidate_len: c_len,
        reference_len: r_len,
        matches,
        totals,
    }
}

fn content(doc: &TokenDocument) -> Vec<TokenId> {
    doc.tokens.iter().copied().filter(|&t| !doc.markers.is_marker(t)).collect()
}

fn check_counts(c: usize, r: usize) -> Result<()> {
    if c != r {
        return Err(Error::invalid(format!("{c} candidates vs {r} references")));
    }
    Ok(())
}

/// BLEU with each document as one segment, markers removed.
pub fn d_bleu(candidates: &[TokenDocument], references: &[TokenDocument]) -> Result<BleuReport> {
    check_counts(candidates.len(), references.len())?;
    let c: Vec<Vec<TokenId>> = candidates.iter().map(content).collect();
    let r: Vec<Vec<TokenId>> = references.iter().map(content).collect();
    let segs: Vec<(&[TokenId], &[TokenId])> = c.iter().zip(&r).map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
    Ok(corpus_bleu(&segs))
}

/// BLEU over aligned sentence pairs; every candidate must have as many
/// sentences as its reference.
pub fn s_bleu(candidates: &[TokenDocument], references: &[TokenDocument]) -> Result<BleuReport> {
    check_counts(candidates.len(), references.len())?;
    let mut c_sents = Vec::new();
    let mut r_sents = Vec::new();
    for (i, (c, r)) in candidates.iter().zip(references).enumerate() {
        let (cs, rs) = (c.sentences()?, r.sentences()?);
        if cs.len() != rs.len() {
            return Err(Error::invalid(format!(
                "document {i}: {} candidate vs {} reference sentences",
                cs.len(),
                rs.len()
            )));
        }
        c_sents.extend(cs);
        r_sents.extend(rs);
    }
    let segs: Vec<(&[TokenId], &[TokenId])> = c_sents
        .iter()
        .zip(&r_sents)
        .map(|(a, b)| (a.as_slice(), b.as_slice()))
        .collect();
    Ok(corpus_bleu(&segs))
}
