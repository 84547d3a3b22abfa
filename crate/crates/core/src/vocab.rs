//! Token ids, the reserved marker ids, and a string vocabulary.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const BOS: TokenId = 2;
pub const EOS: TokenId = 3;
pub const NUM_SPECIAL: usize = 4;

pub const PAD_STR: &str = "<pad>";
pub const UNK_STR: &str = "<unk>";
pub const BOS_STR: &str = "<s>";
pub const EOS_STR: &str = "</s>";

/// Ids of the marker tokens of a document encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Markers {
    pub bos: TokenId,
    pub eos: TokenId,
    pub pad: TokenId,
}

impl Default for Markers {
    fn default() -> Self {
        Markers {
            bos: BOS,
            eos: EOS,
            pad: PAD,
        }
    }
}

impl Markers {
    pub fn is_marker(&self, t: TokenId) -> bool {
        t == self.bos || t == self.eos || t == self.pad
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    /// Builds a vocabulary whose first four entries are the reserved markers.
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = [PAD_STR, UNK_STR, BOS_STR, EOS_STR]
            .iter()
            .map(|s| s.to_string())
            .collect();
        all.extend(words.into_iter().map(Into::into));
        Self::from_words(all)
    }

    fn from_words(words: Vec<String>) -> Result<Self> {
        let expected = [PAD_STR, UNK_STR, BOS_STR, EOS_STR];
        if words.len() < NUM_SPECIAL || words[..NUM_SPECIAL] != expected {
            return Err(Error::config("vocabulary must start with <pad> <unk> <s> </s>"));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i as TokenId).is_some() {
                return Err(Error::config(format!("duplicate vocabulary entry {w:?}")));
            }
        }
        Ok(Vocab { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: TokenId) -> &str {
        self.words.get(id as usize).map_or(UNK_STR, String::as_str)
    }

    /// Parses a whitespace-separated line; unknown words map to `<unk>`
    /// unless `strict` is set.
    pub fn encode_line(&self, line: &str, strict: bool) -> Result<Vec<TokenId>> {
        line.split_whitespace()
            .map(|w| match self.id(w) {
                Some(id) => Ok(id),
                None if strict => Err(Error::UnknownToken(w.to_string())),
                None => Ok(UNK),
            })
            .collect()
    }

    pub fn decode_line(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&i| self.word(i))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One word per line, in id order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.words.join("\n");
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_words(text.lines().map(str::to_string).collect())
    }
}
