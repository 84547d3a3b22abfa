//! Group tags: the sentence index of every token in a document.
//!
//! Tag `k ≥ 1` marks the `k`-th `<s> … </s>` span (markers included); tag
//! `0` is reserved for padding.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::vocab::{Markers, TokenId};

/// A tokenized document: a flat token sequence with sentence markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenDocument {
    pub tokens: Vec<TokenId>,
    pub markers: Markers,
}

impl TokenDocument {
    pub fn new(tokens: Vec<TokenId>) -> Self {
        TokenDocument {
            tokens,
            markers: Markers::default(),
        }
    }

    pub fn with_markers(tokens: Vec<TokenId>, markers: Markers) -> Self {
        TokenDocument { tokens, markers }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Checks marker balance; returns the sentence count.
    pub fn validate(&self) -> Result<usize> {
        build_group_tags(self).map(|t| t.num_groups())
    }

    /// Token ranges of each sentence, markers included.
    pub fn sentence_spans(&self) -> Result<Vec<Range<usize>>> {
        Ok(build_group_tags(self)?.spans())
    }

    pub fn num_sentences(&self) -> Result<usize> {
        self.validate()
    }

    /// The same document with `n` pad tokens appended.
    pub fn padded(&self, n: usize) -> TokenDocument {
        let mut tokens = self.tokens.clone();
        tokens.extend(std::iter::repeat_n(self.markers.pad, n));
        TokenDocument {
            tokens,
            markers: self.markers,
        }
    }

    /// Builds a document from sentences given without markers.
    pub fn from_sentences(sentences: &[Vec<TokenId>], markers: Markers) -> Self {
        let mut tokens = Vec::with_capacity(sentences.iter().map(|s| s.len() + 2).sum());
        for s in sentences {
            tokens.push(markers.bos);
            tokens.extend_from_slice(s);
            tokens.push(markers.eos);
        }
        TokenDocument { tokens, markers }
    }

    /// Sentence contents without markers.
    pub fn sentences(&self) -> Result<Vec<Vec<TokenId>>> {
        Ok(self
            .sentence_spans()?
            .into_iter()
            .map(|r| self.tokens[r.start + 1..r.end - 1].to_vec())
            .collect())
    }
}

/// Tags aligned one-to-one with a token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroupTagSeq(Vec<u32>);

impl GroupTagSeq {
    pub fn new(tags: Vec<u32>) -> Self {
        GroupTagSeq(tags)
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<u32> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> u32 {
        self.0[i]
    }

    pub fn push(&mut self, tag: u32) {
        self.0.push(tag);
    }

    /// The largest tag, which equals the number of sentences.
    pub fn num_groups(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0) as usize
    }

    pub fn is_padding(&self, i: usize) -> bool {
        self.0[i] == 0
    }

    /// Index ranges of each maximal run of equal non-zero tags.
    pub fn spans(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.0.len() {
            let t = self.0[i];
            let start = i;
            while i < self.0.len() && self.0[i] == t {
                i += 1;
            }
            if t != 0 {
                out.push(start..i);
            }
        }
        out
    }

    /// Prefix of the first `n` tags.
    pub fn prefix(&self, n: usize) -> GroupTagSeq {
        GroupTagSeq(self.0[..n].to_vec())
    }
}

impl From<Vec<u32>> for GroupTagSeq {
    fn from(v: Vec<u32>) -> Self {
        GroupTagSeq(v)
    }
}

/// Assigns each token the index of the sentence it belongs to.
pub fn build_group_tags(doc: &TokenDocument) -> Result<GroupTagSeq> {
    let m = doc.markers;
    let mut tags = Vec::with_capacity(doc.tokens.len());
    let mut current = 0u32;
    let mut open: Option<usize> = None;
    for (i, &t) in doc.tokens.iter().enumerate() {
        if t == m.bos {
            if let Some(start) = open {
                return Err(structure(i, format!("<s> inside the sentence opened at {start}")));
            }
            current += 1;
            open = Some(i);
            tags.push(current);
        } else if t == m.eos {
            if open.take().is_none() {
                return Err(structure(i, "</s> without a matching <s>"));
            }
            tags.push(current);
        } else if t == m.pad {
            if open.is_some() {
                return Err(structure(i, "padding inside a sentence"));
            }
            tags.push(0);
        } else {
            if open.is_none() {
                return Err(structure(i, "token outside any <s> … </s> span"));
            }
            tags.push(current);
        }
    }
    if let Some(start) = open {
        return Err(structure(start, "sentence is never closed"));
    }
    Ok(GroupTagSeq(tags))
}

fn structure(position: usize, reason: impl Into<String>) -> Error {
    Error::Structure {
        position,
        reason: reason.into(),
    }
}

/// Tag of the token following `prev_token`, which carried `prev_tag`.
pub fn next_tag(prev_token: TokenId, prev_tag: u32, eos: TokenId, _bos: TokenId) -> u32 {
    if prev_tag == 0 {
        1
    } else if prev_token == eos {
        prev_tag + 1
    } else {
        prev_tag
    }
}

/// Left fold of [`next_tag`] over a (possibly unfinished) token prefix.
///
/// Padding tokens receive tag 0 and do not advance the fold.
pub fn incremental_tags(tokens: &[TokenId], markers: Markers) -> GroupTagSeq {
    let mut tags = Vec::with_capacity(tokens.len());
    let mut prev: Option<(TokenId, u32)> = None;
    for &t in tokens {
        if t == markers.pad {
            tags.push(0);
            continue;
        }
        let tag = match prev {
            None => next_tag(t, 0, markers.eos, markers.bos),
            Some((pt, ptag)) => next_tag(pt, ptag, markers.eos, markers.bos),
        };
        tags.push(tag);
        prev = Some((t, tag));
    }
    GroupTagSeq(tags)
}
