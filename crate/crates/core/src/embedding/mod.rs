//! Word vectors: tables, file formats, skip-gram training and tweet pooling.

mod io;
mod skipgram;

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Label, Language};
use crate::preprocess::ProcessedTweet;

pub use io::{
    load_embeddings, load_embeddings_auto, read_glove_text, read_word2vec_binary,
    read_word2vec_text, save_embeddings, write_glove_text, write_word2vec_binary,
    write_word2vec_text, EmbeddingFormat,
};
pub use skipgram::{train_skipgram, SkipGramConfig};

pub const DEFAULT_DIM: usize = 300;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("parse error at byte {offset}: {reason}")]
    ParseError { offset: u64, reason: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("duplicate word {0:?}")]
    DuplicateWord(String),
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("embedding dimension must be at least {min}, got {found}")]
    InvalidDim { min: usize, found: usize },
    #[error("table is for {table}, record {id} is {record}")]
    LanguageMismatch {
        table: Language,
        record: Language,
        id: String,
    },
    #[error("record {0} has no label")]
    MissingLabel(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, EmbeddingError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    PretrainedBinary,
    PretrainedText,
    PretrainedGlove,
    TrainedSkipgram,
}

/// Word to `dim`-length `f32` vector map. Insertion order is preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    lang: Language,
    source: EmbeddingSource,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, lang: Language, source: EmbeddingSource) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        EmbeddingTable {
            dim,
            lang,
            source,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    pub fn insert(&mut self, word: String, vector: &[f32]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        if self.index.contains_key(&word) {
            return Err(EmbeddingError::DuplicateWord(word));
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lang(&self) -> Language {
        self.lang
    }

    pub fn source(&self) -> EmbeddingSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.index
            .get(word)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.words
            .iter()
            .zip(self.data.chunks_exact(self.dim))
            .map(|(w, v)| (w.as_str(), v))
    }

    /// Same words mapped to bit-identical vectors, ignoring order and provenance.
    pub fn same_vectors(&self, other: &EmbeddingTable) -> bool {
        self.dim == other.dim
            && self.len() == other.len()
            && self.iter().all(|(w, v)| {
                other
                    .get(w)
                    .is_some_and(|o| o.iter().zip(v).all(|(a, b)| a.to_bits() == b.to_bits()))
            })
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (x, y) = (self.get(a)?, self.get(b)?);
        let dot: f64 = x.iter().zip(y).map(|(p, q)| *p as f64 * *q as f64).sum();
        let nx: f64 = x.iter().map(|p| (*p as f64).powi(2)).sum::<f64>().sqrt();
        let ny: f64 = y.iter().map(|q| (*q as f64).powi(2)).sum::<f64>().sqrt();
        (nx > 0.0 && ny > 0.0).then(|| dot / (nx * ny))
    }
}

/// Word vectors of one tweet, `k` rows of length `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedTweet {
    pub dim: usize,
    pub k: usize,
    pub data: Vec<f64>,
}

impl EmbeddedTweet {
    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Self {
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        assert_eq!(data.len(), rows.len() * dim);
        EmbeddedTweet {
            dim,
            k: rows.len(),
            data,
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Rows for every token the table knows, in token order. Unknown tokens are skipped.
pub fn embed_sequence<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> EmbeddedTweet {
    let mut data = Vec::with_capacity(tokens.len() * table.dim);
    let mut k = 0;
    for t in tokens {
        if let Some(v) = table.get(t.as_ref()) {
            data.extend(v.iter().map(|&x| x as f64));
            k += 1;
        }
    }
    EmbeddedTweet {
        dim: table.dim,
        k,
        data,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub vector: Vec<f64>,
    /// No rows were available; `vector` is all zeros.
    pub empty: bool,
}

pub fn mean_pool(e: &EmbeddedTweet) -> Pooled {
    let mut vector = vec![0.0; e.dim];
    if e.k == 0 {
        return Pooled { vector, empty: true };
    }
    for row in e.rows() {
        for (acc, x) in vector.iter_mut().zip(row) {
            *acc += x;
        }
    }
    let k = e.k as f64;
    vector.iter_mut().for_each(|v| *v /= k);
    Pooled {
        vector,
        empty: false,
    }
}

pub fn max_pool(e: &EmbeddedTweet) -> Pooled {
    if e.k == 0 {
        return Pooled {
            vector: vec![0.0; e.dim],
            empty: true,
        };
    }
    let mut vector = vec![f64::NEG_INFINITY; e.dim];
    for row in e.rows() {
        for (acc, &x) in vector.iter_mut().zip(row) {
            *acc = acc.max(x);
        }
    }
    Pooled {
        vector,
        empty: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Mean,
    Max,
}

impl std::str::FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "max" => Ok(Pooling::Max),
            other => Err(format!("unknown pooling {other:?}")),
        }
    }
}

impl Pooling {
    pub fn apply(self, e: &EmbeddedTweet) -> Pooled {
        match self {
            Pooling::Mean => mean_pool(e),
            Pooling::Max => max_pool(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedRecord {
    pub id: String,
    pub vector: Vec<f64>,
    pub label: Label,
    pub lang: Language,
    #[serde(default)]
    pub empty_pool: bool,
}

/// Fixed-length tweet vectors with labels. All vectors have length `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedDataset {
    pub dim: usize,
    pub records: Vec<EncodedRecord>,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn empty_pools(&self) -> usize {
        self.records.iter().filter(|r| r.empty_pool).count()
    }

    pub fn subset(&self, idx: &[usize]) -> EncodedDataset {
        EncodedDataset {
            dim: self.dim,
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    pub fn features(&self) -> Vec<&[f64]> {
        self.records.iter().map(|r| r.vector.as_slice()).collect()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }
}

pub fn encode_dataset(
    tweets: &[ProcessedTweet],
    table: &EmbeddingTable,
    pooling: Pooling,
) -> Result<EncodedDataset> {
    let records = tweets
        .iter()
        .map(|t| {
            if t.lang != table.lang {
                return Err(EmbeddingError::LanguageMismatch {
                    table: table.lang,
                    record: t.lang,
                    id: t.id.clone(),
                });
            }
            let label = t.label.ok_or_else(|| EmbeddingError::MissingLabel(t.id.clone()))?;
            let pooled = pooling.apply(&embed_sequence(&t.tokens, table));
            Ok(EncodedRecord {
                id: t.id.clone(),
                vector: pooled.vector,
                label,
                lang: t.lang,
                empty_pool: pooled.empty,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EncodedDataset {
        dim: table.dim,
        records,
    })
}
