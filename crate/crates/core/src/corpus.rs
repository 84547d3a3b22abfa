//! Synthetic document-translation tasks, corpus files and instance splitting.
//!
//! Token ids `0..4` are the reserved markers. A corpus directory holds
//! `{train,dev,test}.{src,tgt}` (one document per line), `vocab.txt` and
//! `corpus.json`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tagging::{build_group_tags, TokenDocument};
use crate::vocab::{Markers, TokenId, Vocab, NUM_SPECIAL};

/// An aligned source/target document pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocPair {
    pub src: TokenDocument,
    pub tgt: TokenDocument,
}

impl DocPair {
    pub fn num_tokens(&self) -> usize {
        self.src.len() + self.tgt.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Copy,
    /// Every word is replaced through a fixed bijection.
    Substitution,
    /// Words are reversed within each sentence.
    Reversal,
    /// Substitution, plus a pronoun whose translation depends on a class
    /// marker that only appears in the previous source sentence.
    Coreference,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(Task::Copy),
            "substitution" | "token-substitution" => Ok(Task::Substitution),
            "reversal" | "within-sentence-reversal" => Ok(Task::Reversal),
            "coreference" | "cross-sentence-coreference" => Ok(Task::Coreference),
            other => Err(Error::config(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticTaskSpec {
    pub task: Task,
    /// Total vocabulary size, markers included.
    pub vocab_size: usize,
    /// Inclusive range of sentences per document.
    pub sentences: (usize, usize),
    /// Inclusive range of content words per sentence.
    pub tokens: (usize, usize),
    /// Coreference classes.
    pub classes: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        SyntheticTaskSpec {
            task: Task::Copy,
            vocab_size: 32,
            sentences: (2, 4),
            tokens: (3, 6),
            classes: 4,
            train: 200,
            dev: 20,
            test: 20,
            seed: 1,
        }
    }
}

impl SyntheticTaskSpec {
    fn extra_symbols(&self) -> usize {
        match self.task {
            Task::Coreference => 2 * self.classes + 1,
            _ => 0,
        }
    }

    pub fn num_content_words(&self) -> usize {
        self.vocab_size.saturating_sub(NUM_SPECIAL + self.extra_symbols())
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size <= NUM_SPECIAL + self.extra_symbols() + 1 {
            return Err(Error::config(format!(
                "vocab_size {} leaves fewer than two content words",
                self.vocab_size
            )));
        }
        let ranges = [("sentences", self.sentences), ("tokens", self.tokens)];
        for (name, (lo, hi)) in ranges {
            if lo == 0 || lo > hi {
                return Err(Error::config(format!("{name} range ({lo}, {hi}) is empty or starts at 0")));
            }
        }
        if self.task == Task::Coreference && self.classes < 2 {
            return Err(Error::config("coreference needs at least two classes"));
        }
        Ok(())
    }
}

/// Generated corpus plus the symbols needed to interpret it.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub spec: SyntheticTaskSpec,
    pub vocab: Vocab,
    pub train: Vec<DocPair>,
    pub dev: Vec<DocPair>,
    pub test: Vec<DocPair>,
    /// Word translation by token id (identity for non-content ids).
    pub word_map: Vec<TokenId>,
    pub symbols: Symbols,
}

/// Id ranges of the task vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Symbols {
    pub content: std::ops::Range<TokenId>,
    /// Source-only class markers (coreference).
    pub class_markers: Vec<TokenId>,
    /// Source-side pronoun (coreference).
    pub pronoun: Option<TokenId>,
    /// Target-side pronoun per class (coreference).
    pub target_pronouns: Vec<TokenId>,
}

fn build_vocab(spec: &SyntheticTaskSpec) -> Result<(Vocab, Symbols)> {
    let mut words: Vec<String> = Vec::new();
    let mut next = NUM_SPECIAL as TokenId;
    let mut symbols = Symbols {
        content: 0..0,
        class_markers: Vec::new(),
        pronoun: None,
        target_pronouns: Vec::new(),
    };
    if spec.task == Task::Coreference {
        for k in 0..spec.classes {
            words.push(format!("C{k}"));
            symbols.class_markers.push(next);
            next += 1;
        }
        words.push("PRO".into());
        symbols.pronoun = Some(next);
        next += 1;
        for k in 0..spec.classes {
            words.push(format!("pro{k}"));
            symbols.target_pronouns.push(next);
            next += 1;
        }
    }
    let n = spec.num_content_words();
    for i in 0..n {
        words.push(format!("w{i}"));
    }
    symbols.content = next..next + n as TokenId;
    Ok((Vocab::new(words)?, symbols))
}

/// Generates train/dev/test corpora; deterministic in `spec.seed`.
pub fn generate(spec: &SyntheticTaskSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let (vocab, symbols) = build_vocab(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut word_map: Vec<TokenId> = (0..spec.vocab_size as TokenId).collect();
    if matches!(spec.task, Task::Substitution | Task::Coreference) {
        let mut image: Vec<TokenId> = symbols.content.clone().collect();
        image.shuffle(&mut rng);
        for (src, dst) in symbols.content.clone().zip(image) {
            word_map[src as usize] = dst;
        }
    }
    let mut make = |count: usize| -> Vec<DocPair> {
        (0..count)
            .map(|_| generate_document(spec, &symbols, &word_map, &mut rng))
            .collect()
    };
    let train = make(spec.train);
    let dev = make(spec.dev);
    let test = make(spec.test);
    Ok(SyntheticCorpus {
        spec: spec.clone(),
        vocab,
        train,
        dev,
        test,
        word_map,
        symbols,
    })
}

fn generate_document<R: Rng>(spec: &SyntheticTaskSpec, sym: &Symbols, map: &[TokenId], rng: &mut R) -> DocPair {
    let n_sent = rng.random_range(spec.sentences.0..=spec.sentences.1);
    let mut src_sents = Vec::with_capacity(n_sent);
    let mut tgt_sents = Vec::with_capacity(n_sent);
    let mut prev_class = 0usize;
    for _ in 0..n_sent {
        let len = rng.random_range(spec.tokens.0..=spec.tokens.1);
        let words: Vec<TokenId> = (0..len).map(|_| rng.random_range(sym.content.clone())).collect();
        match spec.task {
            Task::Copy => {
                tgt_sents.push(words.clone());
                src_sents.push(words);
            }
            Task::Substitution => {
                tgt_sents.push(words.iter().map(|&w| map[w as usize]).collect());
                src_sents.push(words);
            }
            Task::Reversal => {
                tgt_sents.push(words.iter().rev().copied().collect());
                src_sents.push(words);
            }
            Task::Coreference => {
                let class = rng.random_range(0..spec.classes);
                let pro_at = rng.random_range(0..=len);
                let pronoun = sym.pronoun.expect("coreference symbols");
                let mut src = Vec::with_capacity(len + 2);
                let mut tgt = Vec::with_capacity(len + 1);
                src.push(sym.class_markers[class]);
                for (i, &w) in words.iter().enumerate() {
                    if i == pro_at {
                        src.push(pronoun);
                        tgt.push(sym.target_pronouns[prev_class]);
                    }
                    src.push(w);
                    tgt.push(map[w as usize]);
                }
                if pro_at == len {
                    src.push(pronoun);
                    tgt.push(sym.target_pronouns[prev_class]);
                }
                prev_class = class;
                src_sents.push(src);
                tgt_sents.push(tgt);
            }
        }
    }
    DocPair {
        src: TokenDocument::from_sentences(&src_sents, Markers::default()),
        tgt: TokenDocument::from_sentences(&tgt_sents, Markers::default()),
    }
}

/// Greedily packs whole sentences into instances of at most `max_tokens`
/// tokens; a longer sentence becomes an instance of its own.
pub fn split_instances(doc: &TokenDocument, max_tokens: usize) -> Result<Vec<TokenDocument>> {
    let spans = build_group_tags(doc)?.spans();
    let lens: Vec<usize> = spans.iter().map(|r| r.len()).collect();
    Ok(pack(&lens, |a, b| a <= max_tokens || b == 0)
        .into_iter()
        .map(|r| TokenDocument::with_markers(doc.tokens[spans[r.start].start..spans[r.end - 1].end].to_vec(), doc.markers))
        .collect())
}

/// Splits a pair at shared sentence boundaries so that both sides of every
/// instance respect the cap (single oversized sentences excepted).
pub fn split_pair(pair: &DocPair, max_tokens: usize) -> Result<Vec<DocPair>> {
    let s = build_group_tags(&pair.src)?.spans();
    let t = build_group_tags(&pair.tgt)?.spans();
    if s.len() != t.len() {
        return Err(Error::invalid(format!("{} source vs {} target sentences", s.len(), t.len())));
    }
    let lens: Vec<usize> = s.iter().zip(&t).map(|(a, b)| a.len().max(b.len())).collect();
    Ok(pack(&lens, |a, b| a <= max_tokens || b == 0)
        .into_iter()
        .map(|r| DocPair {
            src: TokenDocument::with_markers(pair.src.tokens[s[r.start].start..s[r.end - 1].end].to_vec(), pair.src.markers),
            tgt: TokenDocument::with_markers(pair.tgt.tokens[t[r.start].start..t[r.end - 1].end].to_vec(), pair.tgt.markers),
        })
        .collect())
}

/// Sentence-index ranges of a greedy packing; `fits(total, count_before)`.
fn pack(lens: &[usize], fits: impl Fn(usize, usize) -> bool) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let (mut start, mut total) = (0, 0);
    for (i, &l) in lens.iter().enumerate() {
        if !fits(total + l, i - start) {
            out.push(start..i);
            start = i;
            total = 0;
        }
        total += l;
    }
    if start < lens.len() {
        out.push(start..lens.len());
    }
    out
}

/// Writes one document per line.
pub fn write_documents(path: &Path, docs: &[TokenDocument], vocab: &Vocab) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for d in docs {
        writeln!(f, "{}", vocab.decode_line(&d.tokens))?;
    }
    f.flush()?;
    Ok(())
}

/// Reads one document per line, checking marker balance.
pub fn read_documents(path: &Path, vocab: &Vocab) -> Result<Vec<TokenDocument>> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut docs = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let doc = TokenDocument::new(vocab.encode_line(&line?, false)?);
        doc.validate().map_err(|e| Error::invalid(format!("{}:{}: {e}", path.display(), i + 1)))?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn read_pairs(src: &Path, tgt: &Path, vocab: &Vocab) -> Result<Vec<DocPair>> {
    let s = read_documents(src, vocab)?;
    let t = read_documents(tgt, vocab)?;
    if s.len() != t.len() {
        return Err(Error::invalid(format!("{} source vs {} target documents", s.len(), t.len())));
    }
    Ok(s.into_iter().zip(t).map(|(src, tgt)| DocPair { src, tgt }).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub spec: SyntheticTaskSpec,
    pub symbols: Symbols,
    pub word_map: Vec<TokenId>,
}

/// A corpus loaded back from disk.
#[derive(Debug, Clone)]
pub struct CorpusFiles {
    pub manifest: CorpusManifest,
    pub vocab: Vocab,
    pub train: Vec<DocPair>,
    pub dev: Vec<DocPair>,
    pub test: Vec<DocPair>,
}

impl SyntheticCorpus {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.vocab.save(&dir.join("vocab.txt"))?;
        for (name, pairs) in [("train", &self.train), ("dev", &self.dev), ("test", &self.test)] {
            let src: Vec<TokenDocument> = pairs.iter().map(|p| p.src.clone()).collect();
            let tgt: Vec<TokenDocument> = pairs.iter().map(|p| p.tgt.clone()).collect();
            write_documents(&dir.join(format!("{name}.src")), &src, &self.vocab)?;
            write_documents(&dir.join(format!("{name}.tgt")), &tgt, &self.vocab)?;
        }
        let manifest = CorpusManifest {
            spec: self.spec.clone(),
            symbols: self.symbols.clone(),
            word_map: self.word_map.clone(),
        };
        fs::write(dir.join("corpus.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

impl CorpusFiles {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: CorpusManifest = serde_json::from_str(&fs::read_to_string(dir.join("corpus.json"))?)?;
        let vocab = Vocab::load(&dir.join("vocab.txt"))?;
        let split = |name: &str| read_pairs(&dir.join(format!("{name}.src")), &dir.join(format!("{name}.tgt")), &vocab);
        Ok(CorpusFiles {
            train: split("train")?,
            dev: split("dev")?,
            test: split("test")?,
            manifest,
            vocab,
        })
    }
}
