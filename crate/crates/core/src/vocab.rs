//! Token vocabulary and the whitespace/punctuation tokenizer.
//!
//! Replaces subword segmentation: words are lowercased, split on whitespace,
//! and punctuation characters become single-character tokens. Out-of-vocab
//! words map to `[UNK]`.

use crate::corpus::PaperRecord;
use crate::error::{Error, Result};
use std::collections::HashMap;
use std::path::Path;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const MASK: u32 = 4;

pub const SPECIALS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];
pub const NUM_SPECIALS: u32 = 5;

#[derive(Clone, Debug)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Build from non-special token strings, keeping their order.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut all: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        all.extend(tokens);
        let index = all
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { tokens: all, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn is_special(id: u32) -> bool {
        id < NUM_SPECIALS
    }

    /// Ids of all non-special tokens, in id order.
    pub fn content_ids(&self) -> std::ops::Range<u32> {
        NUM_SPECIALS..self.tokens.len() as u32
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        crate::corpus::write_atomic(path, out.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < NUM_SPECIALS as usize {
            return Err(Error::Parse {
                line: lines.len(),
                msg: "vocabulary file shorter than the special-token block".into(),
            });
        }
        for (i, expect) in SPECIALS.iter().enumerate() {
            if lines[i] != *expect {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected special {expect}, found {}", lines[i]),
                });
            }
        }
        Ok(Vocabulary::from_tokens(
            lines[NUM_SPECIALS as usize..].iter().map(|s| s.to_string()),
        ))
    }
}

/// Split lowercased text into word and punctuation pieces. Pure lexical pass;
/// no vocabulary involved.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for ch in text.chars().flat_map(|c| c.to_lowercase()) {
        if ch.is_alphanumeric() {
            current.push(ch);
        } else {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Tokenize text into ids; unknown words map to `[UNK]`, specials are never
/// produced from content.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> Vec<u32> {
    split_words(text)
        .iter()
        .map(|w| match vocab.id(w) {
            Some(id) if !Vocabulary::is_special(id) => id,
            _ => UNK,
        })
        .collect()
}

/// Frequency-threshold vocabulary over titles, abstracts and entity names.
/// Ordering: frequency descending, then lexicographic.
pub fn build_vocab(corpus: &[PaperRecord], min_frequency: usize) -> Vocabulary {
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut bump = |text: &str| {
        for w in split_words(text) {
            *counts.entry(w).or_insert(0) += 1;
        }
    };
    for rec in corpus {
        bump(&rec.title);
        bump(&rec.abstract_text);
        for a in &rec.authors {
            bump(a);
        }
        for f in &rec.fos {
            bump(f);
        }
        bump(&rec.venue);
        for a in &rec.affiliations {
            bump(a);
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(w, c)| *c >= min_frequency && !SPECIALS.contains(&w.as_str()))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_tokens(kept.into_iter().map(|(w, _)| w))
}
