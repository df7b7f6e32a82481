//! Config-driven experiment runs.
//!
//! A single-language run labels, preprocesses and embeds one corpus, splits
//! it once and trains every configured classical, recurrent or head model on
//! the same split. A combined run processes each language independently up
//! to the embedding stage, merges the results and trains recurrent and head
//! models on the merged data.
//!
//! Relative paths in a config file resolve against the file's directory.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, load_jsonl, merge_multilingual, split_indices, Label, Language};
use crate::dl::{self, LayerSpec, Network, NetworkConfig, SeqData, TrainTrace};
use crate::embedding::{
    encode_dataset, load_embeddings, load_embeddings_auto, train_skipgram, EmbeddingFormat, EmbeddingTable,
    EncodedDataset, Pooling, SkipGramConfig,
};
use crate::labeling::{label_dataset, LabelStats, SentimentLexicon};
use crate::llm_head::{self, HeadConfig, HeadModel};
use crate::metrics::{confusion_with_classes, ClassMetrics, cross_entropy, report, EvalReport, MetricsError};
use crate::ml::{self, DtConfig, LrConfig, MlModel, RfConfig};
use crate::preprocess::{
    build_vocab, pad, preprocess_dataset, tokenize, DropStats, LanguageResources, PreprocessOptions, ProcessedTweet,
    Vocabulary, DEFAULT_MAXLEN, DEFAULT_MAX_WORDS, DEFAULT_MIN_TOKENS,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(crate::Error),
    #[error("invalid input {path}: {reason}")]
    InvalidInput { path: PathBuf, reason: String },
    #[error("runtime error: {0}")]
    Runtime(crate::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    /// 2 for configuration problems, 3 for unreadable or invalid input data,
    /// 4 for failures while training, scoring or writing results.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Data(_) | ExperimentError::InvalidInput { .. } => 3,
            ExperimentError::Runtime(_) | ExperimentError::Io { .. } => 4,
        }
    }
}

impl From<crate::Error> for ExperimentError {
    fn from(e: crate::Error) -> Self {
        use crate::Error as E;
        match e {
            E::Corpus(_) | E::Labeling(_) | E::Preprocess(_) | E::Embedding(_) => ExperimentError::Data(e),
            E::Ml(_) | E::Dl(_) | E::Head(_) | E::Metrics(_) => ExperimentError::Runtime(e),
        }
    }
}

macro_rules! via_crate_error {
    ($($t:ty),*) => {$(
        impl From<$t> for ExperimentError {
            fn from(e: $t) -> Self {
                crate::Error::from(e).into()
            }
        }
    )*};
}

via_crate_error!(
    corpus::CorpusError,
    crate::labeling::LabelingError,
    crate::preprocess::PreprocessError,
    crate::embedding::EmbeddingError,
    ml::MlError,
    dl::DlError,
    llm_head::HeadError,
    MetricsError
);

pub type Result<T> = std::result::Result<T, ExperimentError>;

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ExperimentError::Config(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SingleLanguage,
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageInput {
    pub lang: Language,
    /// JSONL corpus.
    pub data: PathBuf,
    /// Tab-separated `word score` lexicon; without one the labels stored in
    /// the corpus are used as they are.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    /// Replaces the shipped stopword list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopwords: Option<PathBuf>,
    /// Pretrained vectors; skip-gram vectors are trained on the corpus when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    /// Detected from the file when absent (word2vec binary, then text).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_format: Option<EmbeddingFormat>,
    /// Labeled HSB1 file for head models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_states: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelKind {
    Lr {
        #[serde(default)]
        config: LrConfig,
    },
    Dt {
        #[serde(default)]
        config: DtConfig,
    },
    Rf {
        #[serde(default)]
        config: RfConfig,
    },
    Dl {
        #[serde(default)]
        config: NetworkConfig,
        /// Replaces the architecture template.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        layers: Option<Vec<LayerSpec>>,
    },
    Head {
        #[serde(default)]
        config: HeadConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl ModelSpec {
    pub fn display_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.kind {
            ModelKind::Lr { .. } => "LR".into(),
            ModelKind::Dt { .. } => "DT".into(),
            ModelKind::Rf { .. } => "RF".into(),
            ModelKind::Dl { config, .. } => config.arch.name().into(),
            ModelKind::Head { .. } => "Head".into(),
        }
    }

    pub fn kind_code(&self) -> &'static str {
        match self.kind {
            ModelKind::Lr { .. } => "lr",
            ModelKind::Dt { .. } => "dt",
            ModelKind::Rf { .. } => "rf",
            ModelKind::Dl { .. } => "dl",
            ModelKind::Head { .. } => "head",
        }
    }

    fn is_classical(&self) -> bool {
        matches!(self.kind, ModelKind::Lr { .. } | ModelKind::Dt { .. } | ModelKind::Rf { .. })
    }
}

fn default_ratio() -> f64 {
    0.8
}
fn default_seed() -> u64 {
    1
}
fn default_max_words() -> usize {
    DEFAULT_MAX_WORDS
}
fn default_maxlen() -> usize {
    DEFAULT_MAXLEN
}
fn default_min_tokens() -> usize {
    DEFAULT_MIN_TOKENS
}

/// Experiment description. The `seed` drives the split and replaces the
/// seed field of every model config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub languages: Vec<LanguageInput>,
    pub models: Vec<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zh_wordlist: Option<PathBuf>,
    #[serde(default)]
    pub pooling: Pooling,
    #[serde(default = "default_ratio")]
    pub split_ratio: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_max_words")]
    pub max_words: usize,
    #[serde(default = "default_maxlen")]
    pub maxlen: usize,
    #[serde(default = "default_min_tokens")]
    pub min_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipgram: Option<SkipGramConfig>,
    /// Split each language separately in combined mode.
    #[serde(default)]
    pub stratify_by_lang: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(s: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            serde_json::from_str(s).map_err(|e| ExperimentError::Config(format!("invalid config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        ExperimentConfig::from_json(&s, &base)
            .map_err(|e| ExperimentError::Config(format!("{}: {}", path.display(), e.to_string().trim_start_matches("config error: "))))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Structural checks plus existence of every referenced file.
    pub fn validate(&self) -> Result<()> {
        let n = self.languages.len();
        match self.mode {
            Mode::SingleLanguage if n != 1 => return config_err(format!("single_language mode needs exactly 1 language, got {n}")),
            Mode::Combined if n < 2 => return config_err(format!("combined mode needs at least 2 languages, got {n}")),
            _ => {}
        }
        let langs: BTreeSet<Language> = self.languages.iter().map(|l| l.lang).collect();
        if langs.len() != n {
            return config_err("a language is listed twice");
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return config_err(format!("split_ratio must lie in (0, 1), got {}", self.split_ratio));
        }
        if self.maxlen == 0 || self.max_words == 0 {
            return config_err("maxlen and max_words must be positive");
        }
        if self.models.is_empty() {
            return config_err("no models configured");
        }
        let mut names = BTreeSet::new();
        for m in &self.models {
            if !names.insert(slug(&m.display_name())) {
                return config_err(format!("duplicate model name {:?}", m.display_name()));
            }
            if self.mode == Mode::Combined && m.is_classical() {
                return config_err(format!(
                    "{} is a classical model; combined mode trains recurrent and head models only",
                    m.display_name()
                ));
            }
            if let ModelKind::Head { .. } = m.kind {
                if let Some(l) = self.languages.iter().find(|l| l.hidden_states.is_none()) {
                    return config_err(format!("head model {} needs hidden_states for {}", m.display_name(), l.lang));
                }
            }
        }
        let mut files: Vec<(&str, &Path)> = Vec::new();
        for l in &self.languages {
            files.push(("data", &l.data));
            for (what, p) in [
                ("lexicon", &l.lexicon),
                ("stopwords", &l.stopwords),
                ("embeddings", &l.embeddings),
                ("hidden_states", &l.hidden_states),
            ] {
                if let Some(p) = p {
                    files.push((what, p));
                }
            }
        }
        if let Some(p) = &self.zh_wordlist {
            files.push(("zh_wordlist", p));
        }
        for (what, p) in files {
            let full = self.resolve(p);
            if !full.is_file() {
                return config_err(format!("{what} file not found: {}", full.display()));
            }
        }
        Ok(())
    }

    fn needs_sequences(&self) -> bool {
        self.models.iter().any(|m| matches!(m.kind, ModelKind::Dl { .. }))
    }

    /// Snapshot stored in reports, independent of where the config lives.
    fn snapshot(&self) -> ExperimentConfig {
        ExperimentConfig {
            base_dir: PathBuf::new(),
            ..self.clone()
        }
    }
}

/// Lowercase ASCII letters and digits, other runs collapsed to `-`.
pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Models trained concurrently; 1 trains them in config order.
    pub parallel_models: usize,
    /// Write trained models and traces under `out_dir/models`.
    pub persist_models: bool,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunOptions {
            out_dir: out_dir.into(),
            parallel_models: 1,
            persist_models: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangSummary {
    pub lang: Language,
    pub records: usize,
    pub unlabeled: usize,
    pub dropped: DropStats,
    pub kept: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeling: Option<LabelStats>,
    /// Counts in class order.
    pub label_counts: Vec<(Label, usize)>,
    pub embedding_words: usize,
    pub embedding_dim: usize,
    pub embedding_source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangReport {
    pub lang: Language,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub name: String,
    pub kind: String,
    pub languages: Vec<Language>,
    pub train_size: usize,
    pub test_size: usize,
    /// Scored on the held-out test split.
    pub report: EvalReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub by_language: Vec<LangReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TrainTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oob_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter_count: Option<usize>,
    /// Relative to the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// Run-specific facts that do not follow from the config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub output_dir: String,
    pub timings: Vec<Timing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mode: Mode,
    pub config: ExperimentConfig,
    pub data: Vec<LangSummary>,
    pub models: Vec<ModelResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<RunMeta>,
}

impl RunRecord {
    /// The record without run metadata; equal configs and seeds give equal
    /// reports.
    pub fn report_view(&self) -> RunRecord {
        RunRecord {
            meta: None,
            ..self.clone()
        }
    }
}

struct Timer {
    timings: Vec<Timing>,
}

impl Timer {
    fn time<T>(&mut self, stage: impl Into<String>, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(Timing {
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

pub fn load_resources(cfg: &ExperimentConfig) -> Result<LanguageResources> {
    let mut res = LanguageResources::builtin();
    for l in &cfg.languages {
        if let Some(p) = &l.stopwords {
            res.load_stopwords(l.lang, &cfg.resolve(p))?;
        }
    }
    if let Some(p) = &cfg.zh_wordlist {
        res.load_zh_wordlist(&cfg.resolve(p))?;
    }
    Ok(res)
}

/// One language after labeling, preprocessing and embedding lookup.
pub struct PreparedLanguage {
    pub lang: Language,
    /// Labeled tweets that survived preprocessing.
    pub tweets: Vec<ProcessedTweet>,
    pub table: EmbeddingTable,
    pub summary: LangSummary,
}

pub fn prepare_language(cfg: &ExperimentConfig, input: &LanguageInput, res: &LanguageResources) -> Result<PreparedLanguage> {
    let lang = input.lang;
    let ds = load_jsonl(&cfg.resolve(&input.data), Some(lang))?;
    let records = ds.len();
    let (ds, labeling) = match &input.lexicon {
        Some(p) => {
            let lex = SentimentLexicon::load_tsv(lang, &cfg.resolve(p))?;
            let (d, stats) = label_dataset(&ds, &lex, res).map_err(ExperimentError::from)?;
            (d, Some(stats))
        }
        None => (ds, None),
    };
    let opts = PreprocessOptions {
        min_tokens: cfg.min_tokens,
    };
    let (processed, dropped) = preprocess_dataset(&ds, res, opts)?;
    let survivors = processed.len();
    let tweets: Vec<ProcessedTweet> = processed.into_iter().filter(|t| t.label.is_some()).collect();
    let unlabeled = survivors - tweets.len();
    if tweets.is_empty() {
        return Err(corpus::CorpusError::EmptyDataset.into());
    }
    let table = match &input.embeddings {
        Some(p) => {
            let p = cfg.resolve(p);
            match input.embedding_format {
                Some(f) => load_embeddings(&p, f, lang, None)?,
                None => load_embeddings_auto(&p, lang, None)?.0,
            }
        }
        None => {
            let sg = SkipGramConfig {
                seed: cfg.seed,
                ..cfg.skipgram.unwrap_or_default()
            };
            let corpus: Vec<Vec<&str>> = tweets.iter().map(|t| t.tokens.iter().map(String::as_str).collect()).collect();
            train_skipgram(&corpus, lang, &sg)?
        }
    };
    let mut counts = [0usize; 3];
    for t in &tweets {
        counts[t.label.expect("filtered").index()] += 1;
    }
    let summary = LangSummary {
        lang,
        records,
        unlabeled,
        dropped,
        kept: tweets.len(),
        labeling,
        label_counts: Label::ALL.into_iter().filter(|l| counts[l.index()] > 0).map(|l| (l, counts[l.index()])).collect(),
        embedding_words: table.len(),
        embedding_dim: table.dim(),
        embedding_source: serde_json::to_value(table.source())
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
    };
    log::info!("{lang}: {records} records, {} kept after labeling and preprocessing", summary.kept);
    Ok(PreparedLanguage {
        lang,
        tweets,
        table,
        summary,
    })
}

fn labels_of(tweets: &[ProcessedTweet]) -> Vec<Label> {
    tweets.iter().map(|t| t.label.expect("labeled")).collect()
}

/// Labels present, in class order.
pub fn distinct_labels(labels: &[Label]) -> Vec<Label> {
    let set: BTreeSet<Label> = labels.iter().copied().collect();
    set.into_iter().collect()
}

/// Scores predictions against the truth. `probs` rows are indexed by
/// `prob_classes`.
pub fn evaluation_report(
    classes: &[Label],
    y_true: &[Label],
    y_pred: &[Label],
    probs: &[Vec<f64>],
    prob_classes: &[Label],
) -> std::result::Result<EvalReport, MetricsError> {
    let cm = confusion_with_classes(classes, y_true, y_pred)?;
    let truth = y_true
        .iter()
        .map(|&l| prob_classes.iter().position(|&c| c == l).ok_or(MetricsError::UnknownClass(l)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let loss = cross_entropy(probs, &truth)?;
    Ok(report(&cm).with_loss(loss))
}

/// Seeded split, optionally per language group. `groups` lists group sizes
/// of consecutive records.
pub fn split_groups(groups: &[usize], ratio: f64, seed: u64, stratify: bool) -> Result<(Vec<usize>, Vec<usize>)> {
    let total: usize = groups.iter().sum();
    if !stratify {
        return Ok(split_indices(total, ratio, seed)?);
    }
    let (mut tr, mut te) = (Vec::new(), Vec::new());
    let mut offset = 0;
    for &n in groups {
        let (a, b) = split_indices(n, ratio, seed)?;
        tr.extend(a.into_iter().map(|i| i + offset));
        te.extend(b.into_iter().map(|i| i + offset));
        offset += n;
    }
    Ok((tr, te))
}

/// Pooled hidden states of all languages with their split.
struct HiddenData {
    x: Vec<Vec<f64>>,
    labels: Vec<Label>,
    langs: Vec<Language>,
    split: (Vec<usize>, Vec<usize>),
}

/// Trained model awaiting persistence.
enum Artifact {
    Ml(MlModel),
    Dl(Box<Network>, Vocabulary),
    Head(HeadModel),
}

/// Everything a model needs, shared read-only between trainings.
struct RunData<'a> {
    classes: Vec<Label>,
    langs: Vec<Language>,
    /// Language of each record of the split universe.
    record_langs: Vec<Language>,
    encoded: Option<&'a EncodedDataset>,
    seqs: Option<(&'a SeqData, &'a Vocabulary)>,
    tables: Vec<&'a EmbeddingTable>,
    hidden: Option<&'a HiddenData>,
    train: &'a [usize],
    test: &'a [usize],
    seed: u64,
}

#[allow(clippy::too_many_arguments)]
fn by_language(
    classes: &[Label],
    langs: &[Language],
    test_langs: &[Language],
    y_true: &[Label],
    y_pred: &[Label],
    probs: &[Vec<f64>],
    prob_classes: &[Label],
) -> Result<Vec<LangReport>> {
    if langs.len() < 2 {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for &lang in langs {
        let idx: Vec<usize> = (0..y_true.len()).filter(|&i| test_langs[i] == lang).collect();
        if idx.is_empty() {
            continue;
        }
        let pick = |v: &[Label]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let p: Vec<Vec<f64>> = idx.iter().map(|&i| probs[i].clone()).collect();
        out.push(LangReport {
            lang,
            report: evaluation_report(classes, &pick(y_true), &pick(y_pred), &p, prob_classes)?,
        });
    }
    Ok(out)
}

/// Test-split predictions of one model.
struct Scored {
    classes: Vec<Label>,
    y_true: Vec<Label>,
    y_pred: Vec<Label>,
    probs: Vec<Vec<f64>>,
    prob_classes: Vec<Label>,
    test_langs: Vec<Language>,
}

fn train_model(spec: &ModelSpec, data: &RunData) -> Result<(ModelResult, Artifact)> {
    let name = spec.display_name();
    log::info!("training {name}");
    let mut trace = None;
    let mut oob_accuracy = None;
    let mut parameter_count = None;
    let mut sizes = (data.train.len(), data.test.len());
    let split_langs: Vec<Language> = data.test.iter().map(|&i| data.record_langs[i]).collect();
    let (scored, artifact) = match &spec.kind {
        ModelKind::Lr { .. } | ModelKind::Dt { .. } | ModelKind::Rf { .. } => {
            let enc = data.encoded.ok_or_else(|| ExperimentError::Config(format!("{name} needs pooled vectors")))?;
            let (train, test) = (enc.subset(data.train), enc.subset(data.test));
            let model = match &spec.kind {
                ModelKind::Lr { config } => MlModel::Lr(ml::lr_train(&train, config)?),
                ModelKind::Dt { config } => MlModel::Dt(ml::dt_train(&train, config)?),
                ModelKind::Rf { config } => {
                    let f = ml::rf_train(&train, &RfConfig { seed: data.seed, ..*config })?;
                    oob_accuracy = f.oob_accuracy;
                    MlModel::Rf(f)
                }
                _ => unreachable!("classical kinds only"),
            };
            let y_pred = ml::predict_all(&model, &test)?;
            let probs = test
                .records
                .iter()
                .map(|r| model.predict_proba(&r.vector).map(|p| p.to_vec()))
                .collect::<ml::Result<Vec<_>>>()?;
            let scored = Scored {
                classes: data.classes.clone(),
                y_true: test.labels(),
                y_pred,
                probs,
                prob_classes: Label::ALL.to_vec(),
                test_langs: split_langs,
            };
            (scored, Artifact::Ml(model))
        }
        ModelKind::Dl { config, layers } => {
            let (seqs, vocab) = data
                .seqs
                .ok_or_else(|| ExperimentError::Config(format!("{name} needs token sequences")))?;
            let cfg = NetworkConfig {
                embed_dim: data.tables[0].dim(),
                seed: data.seed,
                ..config.clone()
            };
            let init = |i: u32| -> Option<Vec<f64>> { lookup(&data.tables, &data.langs, vocab.word(i)?) };
            let net = match layers {
                Some(specs) => Network::from_layers(&cfg, data.classes.clone(), vocab.index_space(), specs.clone(), init)?,
                None => Network::build_with_rows(&cfg, data.classes.clone(), vocab.index_space(), init)?,
            };
            let fit = |idx: &[usize]| {
                let s = seqs.subset(idx);
                SeqData {
                    seqs: s.seqs.iter().map(|q| dl::train::fit_length(q, cfg.seq_len)).collect(),
                    labels: s.labels,
                }
            };
            let (train, test) = (fit(data.train), fit(data.test));
            let (net, tr) = dl::train(net, &train, Some(&test))?;
            let (y_pred, probs) = dl::predict(&net, &test.seqs)?;
            trace = Some(tr);
            parameter_count = Some(net.parameter_count());
            let scored = Scored {
                classes: data.classes.clone(),
                y_true: test.labels,
                y_pred,
                probs,
                prob_classes: net.classes.clone(),
                test_langs: split_langs,
            };
            (scored, Artifact::Dl(Box::new(net), vocab.clone()))
        }
        ModelKind::Head { config } => {
            let hs = data
                .hidden
                .ok_or_else(|| ExperimentError::Config(format!("{name} needs hidden states")))?;
            let (train_idx, test_idx) = &hs.split;
            let pick_x = |idx: &[usize]| idx.iter().map(|&i| hs.x[i].clone()).collect::<Vec<_>>();
            let pick_l = |idx: &[usize]| idx.iter().map(|&i| hs.labels[i]).collect::<Vec<_>>();
            let cfg = HeadConfig {
                seed: data.seed,
                ..config.clone()
            };
            let classes = distinct_labels(&hs.labels);
            let (tx, tl) = (pick_x(train_idx), pick_l(train_idx));
            let (vx, vl) = (pick_x(test_idx), pick_l(test_idx));
            let (model, tr) = llm_head::head_train_pooled(&tx, &tl, Some(classes.clone()), &cfg, Some((&vx, &vl)))?;
            let (y_pred, probs) = llm_head::head_predict_pooled(&model, &vx)?;
            sizes = (train_idx.len(), test_idx.len());
            trace = Some(tr);
            parameter_count = Some(model.parameter_count());
            let scored = Scored {
                classes,
                y_true: vl,
                y_pred,
                probs,
                prob_classes: model.classes.clone(),
                test_langs: test_idx.iter().map(|&i| hs.langs[i]).collect(),
            };
            (scored, Artifact::Head(model))
        }
    };
    let s = &scored;
    let report = evaluation_report(&s.classes, &s.y_true, &s.y_pred, &s.probs, &s.prob_classes)?;
    let by_lang = by_language(&s.classes, &data.langs, &s.test_langs, &s.y_true, &s.y_pred, &s.probs, &s.prob_classes)?;
    log::info!("{name}: test accuracy {:.4}", report.accuracy);
    let result = ModelResult {
        name,
        kind: spec.kind_code().into(),
        languages: data.langs.clone(),
        train_size: sizes.0,
        test_size: sizes.1,
        report,
        by_language: by_lang,
        trace,
        oob_accuracy,
        parameter_count,
        artifact: None,
    };
    Ok((result, artifact))
}

/// Embedding row for a vocabulary word. Combined vocabularies prefix words
/// with their language code and a colon.
fn lookup(tables: &[&EmbeddingTable], langs: &[Language], word: &str) -> Option<Vec<f64>> {
    let (table, w) = if tables.len() == 1 {
        (tables[0], word)
    } else {
        let (code, w) = word.split_once(':')?;
        let i = langs.iter().position(|l| l.code() == code)?;
        (tables[i], w)
    };
    table.get(w).map(|v| v.iter().map(|&x| x as f64).collect())
}

fn train_all(specs: &[ModelSpec], data: &RunData, parallel: usize) -> Result<Vec<(ModelResult, Artifact)>> {
    if parallel <= 1 {
        return specs.iter().map(|s| train_model(s, data)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| ExperimentError::Config(format!("cannot start {parallel} worker threads: {e}")))?;
    pool.install(|| specs.par_iter().map(|s| train_model(s, data)).collect())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn persist(results: &mut [(ModelResult, Artifact)], prefix: &str, out_dir: &Path) -> Result<()> {
    let dir = out_dir.join("models");
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (r, a) in results.iter_mut() {
        let stem = format!("{prefix}_{}", slug(&r.name));
        let file = match a {
            Artifact::Ml(m) => {
                let f = format!("{stem}.json");
                m.save(&dir.join(&f))?;
                f
            }
            Artifact::Dl(net, vocab) => {
                let f = format!("{stem}.tlnw");
                dl::io::save_network(net, &dir.join(&f))?;
                let vp = dir.join(format!("{stem}.vocab.json"));
                let json = serde_json::to_string(vocab).expect("vocabulary serializes");
                std::fs::write(&vp, json).map_err(io_err(&vp))?;
                f
            }
            Artifact::Head(m) => {
                let f = format!("{stem}.head.json");
                llm_head::save_head(m, &dir.join(&f))?;
                f
            }
        };
        if let Some(t) = &r.trace {
            let tp = dir.join(format!("{stem}_trace.csv"));
            std::fs::write(&tp, t.to_csv()).map_err(io_err(&tp))?;
        }
        r.artifact = Some(format!("models/{file}"));
    }
    Ok(())
}

/// Token sequences over `vocab`, padded to `maxlen`.
fn sequences(tweets: &[ProcessedTweet], vocab: &Vocabulary, maxlen: usize, namespace: Option<Language>) -> Result<Vec<Vec<u32>>> {
    tweets
        .iter()
        .map(|t| {
            let idx = match namespace {
                Some(l) => {
                    let toks: Vec<String> = t.tokens.iter().map(|w| format!("{}:{w}", l.code())).collect();
                    tokenize(&toks, vocab)
                }
                None => tokenize(&t.tokens, vocab),
            };
            Ok(pad(&idx, maxlen)?.indices)
        })
        .collect()
}

/// Per-language vocabularies concatenated in config order, each word
/// prefixed with its language code.
pub fn joint_vocabulary(parts: &[(Language, Vocabulary)]) -> Vocabulary {
    let words: Vec<String> = parts
        .iter()
        .flat_map(|(l, v)| v.words().iter().map(move |w| format!("{}:{w}", l.code())))
        .collect();
    let n = words.len();
    Vocabulary::from_ranked(words, n)
}

fn load_hidden(cfg: &ExperimentConfig, stratify: bool) -> Result<Option<HiddenData>> {
    if !cfg.models.iter().any(|m| matches!(m.kind, ModelKind::Head { .. })) {
        return Ok(None);
    }
    let (mut x, mut labels, mut langs, mut sizes) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut h = None;
    for l in &cfg.languages {
        let p = cfg.resolve(l.hidden_states.as_ref().expect("validated"));
        let b = llm_head::load_hidden_states(&p).map_err(|e| ExperimentError::Data(e.into()))?;
        let bl = b
            .labels
            .clone()
            .ok_or_else(|| ExperimentError::Data(llm_head::HeadError::MissingLabels.into()))?;
        if let Some(h0) = h {
            if h0 != b.h {
                return Err(corpus::CorpusError::DimensionMismatch { expected: h0, found: b.h }.into());
            }
        }
        h = Some(b.h);
        sizes.push(b.n);
        langs.extend(std::iter::repeat_n(l.lang, b.n));
        x.extend(llm_head::global_average_pool(&b, pool_flag(cfg)));
        labels.extend(bl);
    }
    let split = split_groups(&sizes, cfg.split_ratio, cfg.seed, stratify)?;
    Ok(Some(HiddenData {
        x,
        labels,
        langs,

        split,
    }))
}

fn pool_flag(cfg: &ExperimentConfig) -> bool {
    cfg.models.iter().any(|m| matches!(&m.kind, ModelKind::Head { config } if config.pool_include_padding))
}

pub fn run_single_language(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunRecord> {
    cfg.validate()?;
    if cfg.mode != Mode::SingleLanguage {
        return config_err("run_single_language needs mode single_language");
    }
    let mut timer = Timer { timings: Vec::new() };
    let res = timer.time("resources", || load_resources(cfg))?;
    let input = &cfg.languages[0];
    let prep = timer.time("prepare", || prepare_language(cfg, input, &res))?;
    let encoded = timer.time("encode", || encode_dataset(&prep.tweets, &prep.table, cfg.pooling))?;
    let labels = labels_of(&prep.tweets);
    let (train, test) = split_indices(prep.tweets.len(), cfg.split_ratio, cfg.seed)?;
    let seq_data = if cfg.needs_sequences() {
        let tokens: Vec<Vec<String>> = prep.tweets.iter().map(|t| t.tokens.clone()).collect();
        let vocab = build_vocab(&tokens, cfg.max_words)?;
        let seqs = sequences(&prep.tweets, &vocab, cfg.maxlen, None)?;
        Some((SeqData { seqs, labels: labels.clone() }, vocab))
    } else {
        None
    };
    let hidden = load_hidden(cfg, false)?;
    let data = RunData {
        classes: distinct_labels(&labels),
        langs: vec![prep.lang],
        record_langs: vec![prep.lang; labels.len()],
        encoded: Some(&encoded),
        seqs: seq_data.as_ref().map(|(s, v)| (s, v)),
        tables: vec![&prep.table],
        hidden: hidden.as_ref(),
        train: &train,
        test: &test,
        seed: cfg.seed,
    };
    let mut results = timer.time("train", || train_all(&cfg.models, &data, opts.parallel_models))?;
    if opts.persist_models {
        persist(&mut results, prep.lang.code(), &opts.out_dir)?;
    }
    Ok(RunRecord {
        mode: cfg.mode,
        config: cfg.snapshot(),
        data: vec![prep.summary],
        models: results.into_iter().map(|(r, _)| r).collect(),
        meta: Some(RunMeta {
            output_dir: opts.out_dir.display().to_string(),
            timings: timer.timings,
        }),
    })
}

pub fn run_combined(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunRecord> {
    cfg.validate()?;
    if cfg.mode != Mode::Combined {
        return config_err("run_combined needs mode combined");
    }
    let mut timer = Timer { timings: Vec::new() };
    let res = timer.time("resources", || load_resources(cfg))?;
    let preps = cfg
        .languages
        .iter()
        .map(|l| timer.time(format!("prepare {}", l.lang), || prepare_language(cfg, l, &res)))
        .collect::<Result<Vec<_>>>()?;
    let parts = preps
        .iter()
        .map(|p| encode_dataset(&p.tweets, &p.table, cfg.pooling))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let merged = merge_multilingual(&parts)?;
    let sizes: Vec<usize> = preps.iter().map(|p| p.tweets.len()).collect();
    let (train, test) = split_groups(&sizes, cfg.split_ratio, cfg.seed, cfg.stratify_by_lang)?;
    let labels = merged.labels();
    let langs: Vec<Language> = preps.iter().map(|p| p.lang).collect();
    let seq_data = if cfg.needs_sequences() {
        let mut vocabs = Vec::new();
        for p in &preps {
            let tokens: Vec<Vec<String>> = p.tweets.iter().map(|t| t.tokens.clone()).collect();
            vocabs.push((p.lang, build_vocab(&tokens, cfg.max_words)?));
        }
        let joint = joint_vocabulary(&vocabs);
        let mut seqs = Vec::new();
        for p in &preps {
            seqs.extend(sequences(&p.tweets, &joint, cfg.maxlen, Some(p.lang))?);
        }
        Some((SeqData { seqs, labels: labels.clone() }, joint))
    } else {
        None
    };
    let hidden = load_hidden(cfg, cfg.stratify_by_lang)?;
    let data = RunData {
        classes: distinct_labels(&labels),
        langs: langs.clone(),
        record_langs: merged.records.iter().map(|r| r.lang).collect(),
        encoded: Some(&merged),
        seqs: seq_data.as_ref().map(|(s, v)| (s, v)),
        tables: preps.iter().map(|p| &p.table).collect(),
        hidden: hidden.as_ref(),
        train: &train,
        test: &test,
        seed: cfg.seed,
    };
    let mut results = timer.time("train", || train_all(&cfg.models, &data, opts.parallel_models))?;
    if opts.persist_models {
        persist(&mut results, "combined", &opts.out_dir)?;
    }
    Ok(RunRecord {
        mode: cfg.mode,
        config: cfg.snapshot(),
        data: preps.into_iter().map(|p| p.summary).collect(),
        models: results.into_iter().map(|(r, _)| r).collect(),
        meta: Some(RunMeta {
            output_dir: opts.out_dir.display().to_string(),
            timings: timer.timings,
        }),
    })
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunRecord> {
    match cfg.mode {
        Mode::SingleLanguage => run_single_language(cfg, opts),
        Mode::Combined => run_combined(cfg, opts),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Table,
}

/// Aligned table: per-class precision, recall and F1 (Th, Neu, Non-Th),
/// accuracy, then PMA, RMA, FMA, PWA, RWA, FWA.
pub fn render_table(rr: &RunRecord) -> String {
    let mut rows: Vec<(String, String, &EvalReport)> = Vec::new();
    for m in &rr.models {
        let langs: Vec<&str> = m.languages.iter().map(|l| l.code()).collect();
        rows.push((m.name.clone(), langs.join("+"), &m.report));
        for b in &m.by_language {
            rows.push((format!("  {}", m.name), b.lang.code().to_string(), &b.report));
        }
    }
    let name_w = rows.iter().map(|r| r.0.chars().count()).max().unwrap_or(0).max(5);
    let lang_w = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max(4);
    let groups = ["Precision", "Recall", "F1"];
    let cell = 6;
    let group_w = 3 * cell + 2;
    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}  {:<lang_w$}", "", "");
    for g in groups {
        let _ = write!(out, "  {g:^group_w$}");
    }
    out.push('\n');
    let _ = write!(out, "{:<name_w$}  {:<lang_w$}", "Model", "Lang");
    for _ in groups {
        let _ = write!(out, "  {:>cell$} {:>cell$} {:>cell$}", "Th", "Neu", "Non-Th");
    }
    let _ = write!(out, "  {:>8}", "Accuracy");
    for h in ["PMA", "RMA", "FMA", "PWA", "RWA", "FWA"] {
        let _ = write!(out, " {h:>cell$}");
    }
    out.push('\n');
    for (name, lang, r) in rows {
        let _ = write!(out, "{name:<name_w$}  {lang:<lang_w$}");
        let metrics: [fn(&ClassMetrics) -> f64; 3] = [|c| c.precision, |c| c.recall, |c| c.f1];
        for pick in metrics {
            out.push_str("  ");
            let cells: Vec<String> = Label::ALL
                .iter()
                .map(|&l| match r.class(l) {
                    Some(c) => format!("{:>cell$.2}", pick(c)),
                    None => format!("{:>cell$}", "-"),
                })
                .collect();
            out.push_str(&cells.join(" "));
        }
        let _ = write!(out, "  {:>8.4}", r.accuracy);
        for v in [
            r.macro_avg.precision,
            r.macro_avg.recall,
            r.macro_avg.f1,
            r.weighted_avg.precision,
            r.weighted_avg.recall,
            r.weighted_avg.f1,
        ] {
            let _ = write!(out, " {v:>cell$.2}");
        }
        out.push('\n');
    }
    out
}

/// Writes `report.json` and/or `report.txt` (no timings) plus
/// `run_record.json` with run metadata. Returns the written paths.
pub fn emit_report(rr: &RunRecord, out_dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();
    let mut write = |name: &str, content: String| -> Result<()> {
        let p = out_dir.join(name);
        std::fs::write(&p, content).map_err(io_err(&p))?;
        written.push(p);
        Ok(())
    };
    for f in formats {
        match f {
            ReportFormat::Json => {
                let json = serde_json::to_string_pretty(&rr.report_view()).expect("record serializes");
                write("report.json", json + "\n")?;
            }
            ReportFormat::Table => write("report.txt", render_table(rr))?,
        }
    }
    if rr.meta.is_some() {
        write("run_record.json", serde_json::to_string_pretty(rr).expect("record serializes") + "\n")?;
    }
    Ok(written)
}

pub fn load_report(path: &Path) -> Result<RunRecord> {
    let s = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&s).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))
}
