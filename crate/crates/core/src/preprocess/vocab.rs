use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{PreprocessError, Result};

pub const PAD_INDEX: u32 = 0;
pub const OOV_INDEX: u32 = 1;
pub const DEFAULT_MAX_WORDS: usize = 5000;
pub const DEFAULT_MAXLEN: usize = 500;

/// Frequency-ranked word index. Index 0 is padding, 1 is out-of-vocabulary,
/// words occupy `2..=max_words + 1` in rank order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    words: Vec<String>,
    word_to_index: HashMap<String, u32>,
    max_words: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    max_words: usize,
    words: Vec<String>,
}

impl From<VocabFile> for Vocabulary {
    fn from(f: VocabFile) -> Self {
        Vocabulary::from_ranked(f.words, f.max_words)
    }
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile {
            max_words: v.max_words,
            words: v.words,
        }
    }
}

impl Vocabulary {
    /// Build from words already in rank order.
    pub fn from_ranked(words: Vec<String>, max_words: usize) -> Self {
        let word_to_index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32 + 2))
            .collect();
        Vocabulary {
            words,
            word_to_index,
            max_words,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn max_words(&self) -> usize {
        self.max_words
    }

    /// Rows needed by an embedding matrix covering this vocabulary.
    pub fn index_space(&self) -> usize {
        self.words.len() + 2
    }

    pub fn index_of(&self, word: &str) -> Option<u32> {
        self.word_to_index.get(word).copied()
    }

    pub fn word(&self, index: u32) -> Option<&str> {
        (index as usize)
            .checked_sub(2)
            .and_then(|i| self.words.get(i))
            .map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

pub fn build_vocab<S: AsRef<str>>(corpus: &[Vec<S>], max_words: usize) -> Result<Vocabulary> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tokens in corpus {
        for t in tokens {
            *counts.entry(t.as_ref()).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(PreprocessError::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_words);
    Ok(Vocabulary::from_ranked(
        ranked.into_iter().map(|(w, _)| w.to_string()).collect(),
        max_words,
    ))
}

pub fn tokenize<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Vec<u32> {
    tokens
        .iter()
        .map(|t| vocab.index_of(t.as_ref()).unwrap_or(OOV_INDEX))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub indices: Vec<u32>,
    pub original_len: usize,
    pub maxlen: usize,
}

/// Right-pad with zeros or keep the leading `maxlen` tokens.
pub fn pad(seq: &[u32], maxlen: usize) -> Result<TokenSequence> {
    if maxlen == 0 {
        return Err(PreprocessError::InvalidMaxlen(maxlen));
    }
    let original_len = seq.len().min(maxlen);
    let mut indices = seq[..original_len].to_vec();
    indices.resize(maxlen, PAD_INDEX);
    Ok(TokenSequence {
        indices,
        original_len,
        maxlen,
    })
}
