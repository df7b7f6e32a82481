//! Lexicon polarity scoring, threshold labeling and manual/automatic reconciliation.
//!
//! The polarity of a tweet is the mean lexicon score of its words. Words that
//! are not in the lexicon score zero. Scores map to labels with closed outer
//! intervals: `p <= -0.5` is a threat, `p >= 0.5` is a non-threat, anything in
//! between is neutral. Threat vocabulary therefore carries negative scores.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dataset, Label, Language, LabeledTweet};
use crate::preprocess::{clean_text, LanguageResources};

pub const THREAT_THRESHOLD: f64 = -0.5;
pub const NON_THREAT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum LabelingError {
    #[error("cannot compute polarity of an empty tweet")]
    EmptyTweet,
    #[error("polarity must be finite, got {0}")]
    NonFiniteInput(f64),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon line {line}: {reason}")]
    MalformedLexicon { line: usize, reason: String },
    #[error("lexicon is for {lexicon}, tweet {id} is {tweet}")]
    LanguageMismatch {
        lexicon: Language,
        tweet: Language,
        id: String,
    },
}

pub type Result<T> = std::result::Result<T, LabelingError>;

#[derive(Debug, Clone, PartialEq)]
pub struct SentimentLexicon {
    entries: HashMap<String, f64>,
    lang: Language,
}

impl SentimentLexicon {
    pub fn new(lang: Language) -> Self {
        SentimentLexicon {
            entries: HashMap::new(),
            lang,
        }
    }

    pub fn from_entries<I, S>(lang: Language, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<str>,
    {
        let mut lex = SentimentLexicon::new(lang);
        for (i, (w, s)) in entries.into_iter().enumerate() {
            lex.insert(i + 1, w.as_ref(), s)?;
        }
        Ok(lex)
    }

    fn insert(&mut self, line: usize, word: &str, score: f64) -> Result<()> {
        if !(-1.0..=1.0).contains(&score) {
            return Err(LabelingError::MalformedLexicon {
                line,
                reason: format!("score {score} outside [-1, 1]"),
            });
        }
        self.entries.insert(word.to_lowercase(), score);
        Ok(())
    }

    /// Parse `word<TAB>score` lines. Blank lines and `#` comments are ignored.
    pub fn parse_tsv(lang: Language, content: &str) -> Result<Self> {
        let mut lex = SentimentLexicon::new(lang);
        for (i, line) in content.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, score) = line.split_once('\t').ok_or_else(|| LabelingError::MalformedLexicon {
                line: line_no,
                reason: "expected word<TAB>score".into(),
            })?;
            let score: f64 = score.trim().parse().map_err(|_| LabelingError::MalformedLexicon {
                line: line_no,
                reason: format!("bad score {score:?}"),
            })?;
            lex.insert(line_no, word.trim(), score)?;
        }
        Ok(lex)
    }

    pub fn load_tsv(lang: Language, path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|source| LabelingError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_tsv(lang, &content)
    }

    pub fn lang(&self) -> Language {
        self.lang
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Score of a normalized word; absent words are neutral.
    pub fn score(&self, word: &str) -> f64 {
        self.entries.get(word).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolarityResult {
    pub value: f64,
    pub n: usize,
    pub label: Label,
}

pub fn polarity<S: AsRef<str>>(words: &[S], lex: &SentimentLexicon) -> Result<PolarityResult> {
    if words.is_empty() {
        return Err(LabelingError::EmptyTweet);
    }
    let total: f64 = words.iter().map(|w| lex.score(w.as_ref())).sum();
    let value = total / words.len() as f64;
    Ok(PolarityResult {
        value,
        n: words.len(),
        label: polarity_label(value)?,
    })
}

pub fn polarity_label(p: f64) -> Result<Label> {
    if !p.is_finite() {
        return Err(LabelingError::NonFiniteInput(p));
    }
    Ok(if p <= THREAT_THRESHOLD {
        Label::Threat
    } else if p >= NON_THREAT_THRESHOLD {
        Label::NonThreat
    } else {
        Label::Neutral
    })
}

/// Manual annotation wins whenever it exists.
pub fn reconcile(manual: Option<Label>, auto: Label) -> Label {
    manual.unwrap_or(auto)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    /// Records where both labels exist.
    pub compared: usize,
    /// Of those, records where they agree.
    pub agreed: usize,
    /// Records whose text produced no words, so no polarity could be computed.
    pub no_polarity: usize,
    /// Two-class records whose polarity fell in the neutral band.
    pub neutral_suppressed: usize,
}

impl LabelStats {
    pub fn agreement(&self) -> Option<f64> {
        (self.compared > 0).then(|| self.agreed as f64 / self.compared as f64)
    }
}

/// Attach a polarity label computed on the cleaned but unstemmed words and
/// refresh the final label.
///
/// For languages without a neutral class, a neutral polarity leaves
/// `polarity_label` empty.
pub fn label_tweet(
    tweet: &LabeledTweet,
    lex: &SentimentLexicon,
    res: &LanguageResources,
    stats: &mut LabelStats,
) -> Result<LabeledTweet> {
    if tweet.lang != lex.lang {
        return Err(LabelingError::LanguageMismatch {
            lexicon: lex.lang,
            tweet: tweet.lang,
            id: tweet.id.clone(),
        });
    }
    let cleaned = clean_text(&tweet.text, tweet.lang);
    let words = res.segment(&cleaned.text, tweet.lang);
    let mut out = tweet.clone();
    out.polarity_label = match polarity(&words, lex) {
        Ok(p) if p.label == Label::Neutral && !tweet.lang.allows_neutral() => {
            stats.neutral_suppressed += 1;
            None
        }
        Ok(p) => Some(p.label),
        Err(LabelingError::EmptyTweet) => {
            stats.no_polarity += 1;
            None
        }
        Err(e) => return Err(e),
    };
    if let (Some(m), Some(a)) = (out.manual_label, out.polarity_label) {
        stats.compared += 1;
        if m == a {
            stats.agreed += 1;
        }
    }
    out.final_label = match out.polarity_label {
        Some(auto) => Some(reconcile(out.manual_label, auto)),
        None => out.manual_label,
    };
    Ok(out)
}

pub fn label_dataset(
    ds: &Dataset,
    lex: &SentimentLexicon,
    res: &LanguageResources,
) -> std::result::Result<(Dataset, LabelStats), crate::Error> {
    let mut stats = LabelStats::default();
    let records = ds
        .records()
        .iter()
        .map(|t| label_tweet(t, lex, res, &mut stats))
        .collect::<Result<Vec<_>>>()?;
    Ok((Dataset::new(records)?, stats))
}
