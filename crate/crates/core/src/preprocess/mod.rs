//! Cleaning, segmentation, stopword removal, stemming, vocabulary and padding.
//!
//! A tweet goes through `clean_text -> segment -> remove_stopwords -> stem`.
//! Records with fewer than `min_tokens` words after cleaning are dropped as
//! lacking context.

mod clean;
mod stem;
mod vocab;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dataset, Label, Language, LabeledTweet};

pub use clean::{clean_text, CleanText, DropReason};
pub use stem::{arabic_light, stem, stem_word};
pub use vocab::{
    build_vocab, pad, tokenize, TokenSequence, Vocabulary, DEFAULT_MAXLEN, DEFAULT_MAX_WORDS,
    OOV_INDEX, PAD_INDEX,
};

pub const DEFAULT_MIN_TOKENS: usize = 2;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("no stopword list loaded for {0}")]
    MissingStopwordList(Language),
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("maxlen must be at least 1, got {0}")]
    InvalidMaxlen(usize),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, PreprocessError>;

const EN_STOPWORDS: &str = include_str!("../../resources/stopwords/en.txt");
const ZH_STOPWORDS: &str = include_str!("../../resources/stopwords/zh.txt");
const RU_STOPWORDS: &str = include_str!("../../resources/stopwords/ru.txt");
const AR_STOPWORDS: &str = include_str!("../../resources/stopwords/ar.txt");
const ZH_WORDLIST: &str = include_str!("../../resources/zh_wordlist.txt");

fn word_lines(content: &str) -> impl Iterator<Item = String> + '_ {
    content
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
}

fn read_words(path: &Path) -> Result<Vec<String>> {
    let content = fs::read_to_string(path).map_err(|source| PreprocessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(word_lines(&content).collect())
}

/// Stopword lists and the Chinese segmentation wordlist.
#[derive(Debug, Clone, Default)]
pub struct LanguageResources {
    stopwords: HashMap<Language, HashSet<String>>,
    zh_words: HashSet<String>,
    zh_longest: usize,
}

impl LanguageResources {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The shipped stopword lists for all four languages and the shipped
    /// Chinese wordlist.
    pub fn builtin() -> Self {
        let mut res = Self::empty();
        for (lang, src) in [
            (Language::English, EN_STOPWORDS),
            (Language::Chinese, ZH_STOPWORDS),
            (Language::Russian, RU_STOPWORDS),
            (Language::Arabic, AR_STOPWORDS),
        ] {
            res.set_stopwords(lang, word_lines(src));
        }
        res.set_zh_wordlist(word_lines(ZH_WORDLIST));
        res
    }

    pub fn set_stopwords(&mut self, lang: Language, words: impl IntoIterator<Item = String>) {
        self.stopwords
            .insert(lang, words.into_iter().map(|w| w.to_lowercase()).collect());
    }

    pub fn load_stopwords(&mut self, lang: Language, path: &Path) -> Result<()> {
        let words = read_words(path)?;
        self.set_stopwords(lang, words);
        Ok(())
    }

    pub fn set_zh_wordlist(&mut self, words: impl IntoIterator<Item = String>) {
        self.zh_words = words.into_iter().collect();
        self.zh_longest = self.zh_words.iter().map(|w| w.chars().count()).max().unwrap_or(0);
    }

    pub fn load_zh_wordlist(&mut self, path: &Path) -> Result<()> {
        let words = read_words(path)?;
        self.set_zh_wordlist(words);
        Ok(())
    }

    pub fn stopwords(&self, lang: Language) -> Option<&HashSet<String>> {
        self.stopwords.get(&lang)
    }

    /// Split cleaned text into lowercase words.
    ///
    /// Chinese runs are segmented by greedy longest match against the
    /// wordlist, falling back to single characters. Everything else splits
    /// on whitespace.
    pub fn segment(&self, text: &str, lang: Language) -> Vec<String> {
        let lower = text.to_lowercase();
        match lang {
            Language::Chinese => lower
                .split_whitespace()
                .flat_map(|chunk| self.segment_zh_chunk(chunk))
                .collect(),
            _ => lower.split_whitespace().map(str::to_string).collect(),
        }
    }

    fn segment_zh_chunk(&self, chunk: &str) -> Vec<String> {
        let chars: Vec<char> = chunk.chars().collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            if !is_cjk(chars[i]) {
                let start = i;
                while i < chars.len() && !is_cjk(chars[i]) {
                    i += 1;
                }
                out.push(chars[start..i].iter().collect());
                continue;
            }
            let mut take = 1;
            let limit = self.zh_longest.min(chars.len() - i);
            for len in (2..=limit).rev() {
                let cand: String = chars[i..i + len].iter().collect();
                if chars[i..i + len].iter().all(|&c| is_cjk(c)) && self.zh_words.contains(&cand) {
                    take = len;
                    break;
                }
            }
            out.push(chars[i..i + take].iter().collect());
            i += take;
        }
        out
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F)
}

pub fn segment(text: &CleanText, lang: Language, res: &LanguageResources) -> Vec<String> {
    res.segment(&text.text, lang)
}

pub fn remove_stopwords<S: AsRef<str>>(
    tokens: &[S],
    lang: Language,
    res: &LanguageResources,
) -> Result<Vec<String>> {
    let stop = res
        .stopwords(lang)
        .ok_or(PreprocessError::MissingStopwordList(lang))?;
    Ok(tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| !stop.contains(&t.to_lowercase()))
        .map(str::to_string)
        .collect())
}

/// A tweet after the full text pipeline, before vocabulary indexing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedTweet {
    pub id: String,
    pub lang: Language,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DropStats {
    pub all_noise: usize,
    pub no_context: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    pub min_tokens: usize,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            min_tokens: DEFAULT_MIN_TOKENS,
        }
    }
}

pub fn preprocess_tweet(
    tweet: &LabeledTweet,
    res: &LanguageResources,
    opts: PreprocessOptions,
) -> Result<std::result::Result<ProcessedTweet, DropReason>> {
    let cleaned = clean_text(&tweet.text, tweet.lang);
    if let Some(reason) = cleaned.dropped_reason {
        return Ok(Err(reason));
    }
    let words = segment(&cleaned, tweet.lang, res);
    if words.len() < opts.min_tokens {
        return Ok(Err(DropReason::NoContext));
    }
    let kept = remove_stopwords(&words, tweet.lang, res)?;
    Ok(Ok(ProcessedTweet {
        id: tweet.id.clone(),
        lang: tweet.lang,
        label: tweet.final_label,
        tokens: stem(&kept, tweet.lang),
    }))
}

pub fn preprocess_dataset(
    ds: &Dataset,
    res: &LanguageResources,
    opts: PreprocessOptions,
) -> Result<(Vec<ProcessedTweet>, DropStats)> {
    let mut out = Vec::with_capacity(ds.len());
    let mut stats = DropStats::default();
    for t in ds.records() {
        match preprocess_tweet(t, res, opts)? {
            Ok(p) => out.push(p),
            Err(DropReason::AllNoise) => stats.all_noise += 1,
            Err(DropReason::NoContext) => stats.no_context += 1,
        }
    }
    Ok((out, stats))
}
