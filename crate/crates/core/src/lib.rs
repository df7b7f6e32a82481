//! Multilingual threat detection on short social-media posts.
//!
//! The pipeline labels raw tweets against a sentiment lexicon, cleans and
//! tokenizes them per language, maps tokens to word vectors and trains either
//! classical classifiers on pooled vectors or recurrent networks on token
//! sequences. A small dense head over precomputed transformer hidden states
//! covers the multilingual setting.

pub mod corpus;
pub mod embedding;
pub mod dl;
pub mod experiments;
pub mod labeling;
pub mod llm_head;
pub mod metrics;
pub mod ml;
pub mod preprocess;
pub mod rng;
pub mod synthetic;

use thiserror::Error;

/// Any pipeline failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Labeling(#[from] labeling::LabelingError),
    #[error(transparent)]
    Preprocess(#[from] preprocess::PreprocessError),
    #[error(transparent)]
    Embedding(#[from] embedding::EmbeddingError),
    #[error(transparent)]
    Ml(#[from] ml::MlError),
    #[error(transparent)]
    Dl(#[from] dl::DlError),
    #[error(transparent)]
    Head(#[from] llm_head::HeadError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
}

pub type Result<T> = std::result::Result<T, Error>;
