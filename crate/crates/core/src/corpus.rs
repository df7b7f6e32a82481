//! Dataset ingestion, validation, deterministic splitting and multilingual merging.
//!
//! Datasets are stored as JSONL, one tweet per line:
//!
//! ```text
//! {"id":"t1","text":"evacuate now","lang":"en","label":"threat"}
//! ```
//!
//! `id` and `label` are optional on input. A `label` is the manual annotation.
//! Persisted datasets additionally carry `polarity_label` and `final_label`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EncodedDataset;
use crate::rng;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("empty text on line {line}")]
    EmptyText { line: usize },
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("split ratio must lie in (0, 1], got {0}")]
    InvalidRatio(f64),
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no datasets to merge")]
    EmptyInput,
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "en")]
    English,
    #[serde(rename = "zh")]
    Chinese,
    #[serde(rename = "ru")]
    Russian,
    #[serde(rename = "ar")]
    Arabic,
}

impl Language {
    pub const ALL: [Language; 4] = [
        Language::English,
        Language::Chinese,
        Language::Russian,
        Language::Arabic,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Language::English => "en",
            Language::Chinese => "zh",
            Language::Russian => "ru",
            Language::Arabic => "ar",
        }
    }

    /// Arabic data only distinguishes threat from non-threat.
    pub fn allows_neutral(self) -> bool {
        self != Language::Arabic
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "en" => Ok(Language::English),
            "zh" => Ok(Language::Chinese),
            "ru" => Ok(Language::Russian),
            "ar" => Ok(Language::Arabic),
            other => Err(format!("unknown language code {other:?}")),
        }
    }
}

/// Class label. The declaration order is the fixed class order used for
/// tie-breaking and for confusion-matrix layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "threat")]
    Threat,
    #[serde(rename = "neutral")]
    Neutral,
    #[serde(rename = "non-threat")]
    NonThreat,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Threat, Label::Neutral, Label::NonThreat];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Threat => "threat",
            Label::Neutral => "neutral",
            Label::NonThreat => "non-threat",
        }
    }

    /// Column abbreviation used in report tables.
    pub fn short(self) -> &'static str {
        match self {
            Label::Threat => "Th",
            Label::Neutral => "Neu",
            Label::NonThreat => "Non-Th",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .to_lowercase()
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect();
        match norm.as_str() {
            "threat" => Ok(Label::Threat),
            "neutral" => Ok(Label::Neutral),
            "nonthreat" => Ok(Label::NonThreat),
            _ => Err(format!("unknown label {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTweet {
    pub id: String,
    pub text: String,
    pub lang: Language,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manual_label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarity_label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_label: Option<Label>,
}

impl LabeledTweet {
    pub fn new(id: impl Into<String>, text: impl Into<String>, lang: Language) -> Self {
        LabeledTweet {
            id: id.into(),
            text: text.into(),
            lang,
            manual_label: None,
            polarity_label: None,
            final_label: None,
        }
    }

    pub fn with_manual(mut self, label: Label) -> Self {
        self.manual_label = Some(label);
        self.refresh_final();
        self
    }

    /// Recompute `final_label` from the manual and polarity labels.
    pub fn refresh_final(&mut self) {
        self.final_label = self.manual_label.or(self.polarity_label);
    }
}

/// An ordered, id-unique collection of tweets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    records: Vec<LabeledTweet>,
}

impl Dataset {
    pub fn new(records: Vec<LabeledTweet>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(CorpusError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Dataset { records })
    }

    pub fn records(&self) -> &[LabeledTweet] {
        &self.records
    }

    pub fn into_records(self) -> Vec<LabeledTweet> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lang_profile(&self) -> BTreeMap<Language, usize> {
        let mut profile = BTreeMap::new();
        for r in &self.records {
            *profile.entry(r.lang).or_insert(0) += 1;
        }
        profile
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("tweet serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let io_err = |source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = fs::File::create(path).map_err(io_err)?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(io_err)
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    #[serde(default)]
    id: Option<serde_json::Value>,
    text: String,
    lang: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    manual_label: Option<String>,
    #[serde(default)]
    polarity_label: Option<String>,
    #[serde(default)]
    final_label: Option<String>,
}

fn parse_label(line: usize, raw: Option<&str>) -> Result<Option<Label>> {
    match raw {
        None => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|reason| CorpusError::MalformedRecord { line, reason }),
    }
}

fn parse_record(line: usize, raw: &str) -> Result<LabeledTweet> {
    let rec: RawRecord = serde_json::from_str(raw).map_err(|e| CorpusError::MalformedRecord {
        line,
        reason: e.to_string(),
    })?;
    let lang: Language = rec
        .lang
        .parse()
        .map_err(|reason| CorpusError::MalformedRecord { line, reason })?;
    if rec.text.trim().is_empty() {
        return Err(CorpusError::EmptyText { line });
    }
    let id = match rec.id {
        None | Some(serde_json::Value::Null) => format!("line-{line}"),
        Some(serde_json::Value::String(s)) => s,
        Some(other) => other.to_string(),
    };
    if rec.label.is_some() && rec.manual_label.is_some() {
        return Err(CorpusError::MalformedRecord {
            line,
            reason: "both label and manual_label given".into(),
        });
    }
    let mut manual = parse_label(line, rec.label.as_deref().or(rec.manual_label.as_deref()))?;
    let polarity = parse_label(line, rec.polarity_label.as_deref())?;
    let stated_final = parse_label(line, rec.final_label.as_deref())?;
    if manual.is_none() && polarity.is_none() {
        manual = stated_final;
    }
    let mut tweet = LabeledTweet {
        id,
        text: rec.text,
        lang,
        manual_label: manual,
        polarity_label: polarity,
        final_label: None,
    };
    tweet.refresh_final();
    if stated_final.is_some() && stated_final != tweet.final_label {
        return Err(CorpusError::MalformedRecord {
            line,
            reason: "final_label disagrees with manual/polarity labels".into(),
        });
    }
    if !lang.allows_neutral() && manual == Some(Label::Neutral) {
        return Err(CorpusError::MalformedRecord {
            line,
            reason: format!("language {lang} has no neutral class"),
        });
    }
    Ok(tweet)
}

/// Parse JSONL content. Line numbers are 1-based; blank lines are skipped.
pub fn parse_jsonl(content: &str, lang_filter: Option<Language>) -> Result<Dataset> {
    parse_lines(content.lines().map(|l| Ok(l.to_string())), lang_filter)
}

fn parse_lines(
    lines: impl Iterator<Item = Result<String>>,
    lang_filter: Option<Language>,
) -> Result<Dataset> {
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let tweet = parse_record(i + 1, &line)?;
        if lang_filter.is_none_or(|l| l == tweet.lang) {
            records.push(tweet);
        }
    }
    Dataset::new(records)
}

pub fn load_jsonl(path: &Path, lang_filter: Option<Language>) -> Result<Dataset> {
    let f = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let lines = BufReader::new(f).lines().map(|l| {
        l.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
    });
    parse_lines(lines, lang_filter)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    pub seed: u64,
    pub ratio: f64,
}

/// Number of training items for `n` records. A small epsilon keeps ratios
/// such as 0.29 × 100 from flooring to 28 through representation error.
pub fn train_size(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64 + 1e-9).floor() as usize).min(n)
}

fn check_ratio(ratio: f64) -> Result<()> {
    if ratio.is_finite() && ratio > 0.0 && ratio <= 1.0 {
        Ok(())
    } else {
        Err(CorpusError::InvalidRatio(ratio))
    }
}

/// Seeded shuffle of `0..n` followed by a prefix split.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    check_ratio(ratio)?;
    if n == 0 {
        return Err(CorpusError::EmptyDataset);
    }
    let mut order = rng::shuffled_indices(n, seed);
    let test = order.split_off(train_size(n, ratio));
    Ok((order, test))
}

pub fn split_train_test(ds: &Dataset, ratio: f64, seed: u64) -> Result<SplitPair> {
    let (train_idx, test_idx) = split_indices(ds.len(), ratio, seed)?;
    let pick = |idx: &[usize]| Dataset {
        records: idx.iter().map(|&i| ds.records[i].clone()).collect(),
    };
    Ok(SplitPair {
        train: pick(&train_idx),
        test: pick(&test_idx),
        seed,
        ratio,
    })
}

/// Concatenate per-language encoded datasets sharing one embedding dimension.
pub fn merge_multilingual(parts: &[EncodedDataset]) -> Result<EncodedDataset> {
    let first = parts.first().ok_or(CorpusError::EmptyInput)?;
    let dim = first.dim;
    let mut records = Vec::with_capacity(parts.iter().map(|p| p.records.len()).sum());
    for part in parts {
        if part.dim != dim {
            return Err(CorpusError::DimensionMismatch {
                expected: dim,
                found: part.dim,
            });
        }
        if part.records.is_empty() {
            return Err(CorpusError::EmptyInput);
        }
        records.extend(part.records.iter().cloned());
    }
    Ok(EncodedDataset { dim, records })
}
