use gtransformer::corpus::{
    generate, split_instances, split_pair, CorpusFiles, DocPair, SyntheticCorpus, SyntheticTaskSpec, Task,
};
use gtransformer::tagging::TokenDocument;
use gtransformer::vocab::{Markers, TokenId, Vocab};
use proptest::prelude::*;

fn spec(task: Task, seed: u64) -> SyntheticTaskSpec {
    SyntheticTaskSpec {
        task,
        vocab_size: 40,
        sentences: (1, 8),
        tokens: (1, 6),
        train: 60,
        dev: 10,
        test: 10,
        seed,
        ..Default::default()
    }
}

/// Rule-based translator for the coreference task that works on the
/// surface strings of the vocabulary.
fn oracle_translate(src: &TokenDocument, vocab: &Vocab, word_map: &[TokenId]) -> TokenDocument {
    let mut prev_class = "0".to_string();
    let mut out = Vec::new();
    for sent in src.sentences().unwrap() {
        let mut tgt = Vec::new();
        let mut class = None;
        for &t in &sent {
            let w = vocab.word(t);
            if let Some(k) = w.strip_prefix('C') {
                class = Some(k.to_string());
            } else if w == "PRO" {
                tgt.push(vocab.id(&format!("pro{prev_class}")).unwrap());
            } else {
                tgt.push(word_map[t as usize]);
            }
        }
        prev_class = class.expect("every source sentence names its class");
        out.push(tgt);
    }
    TokenDocument::from_sentences(&out, src.markers)
}

fn all_pairs(c: &SyntheticCorpus) -> impl Iterator<Item = &DocPair> {
    c.train.iter().chain(&c.dev).chain(&c.test)
}

#[test]
fn coreference_oracle_translates_every_document() {
    for seed in 0..5 {
        let c = generate(&SyntheticTaskSpec {
            task: Task::Coreference,
            classes: 3,
            ..spec(Task::Coreference, seed)
        })
        .unwrap();
        let (mut right, mut total) = (0, 0);
        for p in all_pairs(&c) {
            let guess = oracle_translate(&p.src, &c.vocab, &c.word_map);
            total += p.tgt.len();
            right += guess.tokens.iter().zip(&p.tgt.tokens).filter(|(a, b)| a == b).count();
            assert_eq!(guess, p.tgt);
        }
        assert_eq!(right, total);
    }
}

#[test]
fn every_coreference_sentence_needs_the_previous_one() {
    let c = generate(&spec(Task::Coreference, 3)).unwrap();
    let pro = c.vocab.id("PRO").unwrap();
    for p in all_pairs(&c) {
        for sent in p.src.sentences().unwrap() {
            assert_eq!(sent.iter().filter(|&&t| t == pro).count(), 1);
        }
    }
    // The pronoun's translation varies with the previous class, so a
    // sentence-local translator cannot be right everywhere.
    let mut seen = std::collections::HashSet::new();
    for p in &c.train {
        for sent in p.tgt.sentences().unwrap() {
            for &t in &sent {
                if c.symbols.target_pronouns.contains(&t) {
                    seen.insert(t);
                }
            }
        }
    }
    assert!(seen.len() > 1);
}

#[test]
fn simple_tasks_follow_their_rule() {
    let copy = generate(&spec(Task::Copy, 1)).unwrap();
    assert!(all_pairs(&copy).all(|p| p.src == p.tgt));

    let sub = generate(&spec(Task::Substitution, 1)).unwrap();
    let mut image: Vec<TokenId> = sub.symbols.content.clone().map(|t| sub.word_map[t as usize]).collect();
    image.sort_unstable();
    assert_eq!(image, sub.symbols.content.clone().collect::<Vec<_>>());
    for p in all_pairs(&sub) {
        let mapped: Vec<TokenId> = p.src.tokens.iter().map(|&t| sub.word_map[t as usize]).collect();
        assert_eq!(mapped, p.tgt.tokens);
    }

    let rev = generate(&spec(Task::Reversal, 1)).unwrap();
    for p in all_pairs(&rev) {
        let reversed: Vec<Vec<TokenId>> = p
            .src
            .sentences()
            .unwrap()
            .into_iter()
            .map(|s| s.into_iter().rev().collect())
            .collect();
        assert_eq!(p.tgt.sentences().unwrap(), reversed);
    }
}

#[test]
fn generation_is_seed_deterministic() {
    for task in [Task::Copy, Task::Substitution, Task::Reversal, Task::Coreference] {
        let (a, b) = (generate(&spec(task, 9)).unwrap(), generate(&spec(task, 9)).unwrap());
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.word_map, b.word_map);
        let c = generate(&spec(task, 10)).unwrap();
        assert_ne!(a.train, c.train);
    }
}

#[test]
fn pairs_are_sentence_aligned_and_within_ranges() {
    let s = spec(Task::Coreference, 4);
    let c = generate(&s).unwrap();
    for p in all_pairs(&c) {
        let (a, b) = (p.src.sentences().unwrap(), p.tgt.sentences().unwrap());
        assert_eq!(a.len(), b.len());
        assert!((s.sentences.0..=s.sentences.1).contains(&a.len()));
        for sent in &b {
            // Content words plus the translated pronoun.
            assert!((s.tokens.0 + 1..=s.tokens.1 + 1).contains(&sent.len()));
        }
    }
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(generate(&SyntheticTaskSpec {
        vocab_size: 5,
        ..Default::default()
    })
    .is_err());
    assert!(generate(&SyntheticTaskSpec {
        tokens: (0, 3),
        ..Default::default()
    })
    .is_err());
    assert!(generate(&SyntheticTaskSpec {
        task: Task::Coreference,
        vocab_size: 12,
        ..Default::default()
    })
    .is_err());
}

#[test]
fn corpus_files_round_trip() {
    let c = generate(&spec(Task::Coreference, 5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    c.save(dir.path()).unwrap();
    let back = CorpusFiles::load(dir.path()).unwrap();
    assert_eq!(back.train, c.train);
    assert_eq!(back.dev, c.dev);
    assert_eq!(back.test, c.test);
    assert_eq!(back.manifest.spec, c.spec);
    assert_eq!(back.manifest.word_map, c.word_map);
    assert_eq!(back.vocab.len(), c.vocab.len());
    let first = std::fs::read_to_string(dir.path().join("train.src")).unwrap();
    assert!(first.lines().next().unwrap().starts_with("<s> C"));
}

fn doc_strategy() -> impl Strategy<Value = TokenDocument> {
    prop::collection::vec(prop::collection::vec(4u32..30, 1..40), 1..12)
        .prop_map(|s| TokenDocument::from_sentences(&s, Markers::default()))
}

proptest! {
    #[test]
    fn split_instances_concatenate_back(doc in doc_strategy(), cap in 1usize..80) {
        let parts = split_instances(&doc, cap).unwrap();
        let joined: Vec<TokenId> = parts.iter().flat_map(|d| d.tokens.clone()).collect();
        prop_assert_eq!(joined, doc.tokens.clone());
        for p in &parts {
            prop_assert!(p.len() <= cap || p.num_sentences().unwrap() == 1);
        }
    }

    #[test]
    fn split_pair_keeps_alignment(seed in 0u64..50, cap in 8usize..60) {
        let c = generate(&SyntheticTaskSpec { train: 3, dev: 0, test: 0, ..spec(Task::Coreference, seed) }).unwrap();
        for p in &c.train {
            let parts = split_pair(p, cap).unwrap();
            let src: Vec<TokenId> = parts.iter().flat_map(|d| d.src.tokens.clone()).collect();
            let tgt: Vec<TokenId> = parts.iter().flat_map(|d| d.tgt.tokens.clone()).collect();
            prop_assert_eq!(&src, &p.src.tokens);
            prop_assert_eq!(&tgt, &p.tgt.tokens);
            for part in &parts {
                prop_assert_eq!(part.src.num_sentences().unwrap(), part.tgt.num_sentences().unwrap());
            }
        }
    }
}
