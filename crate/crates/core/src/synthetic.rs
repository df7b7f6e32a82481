//! Synthetic four-language corpus with class-exclusive keywords.
//!
//! Every language gets its own pseudo-words in its own script. Each class
//! owns a set of keywords whose vectors sit near a class centroid shared by
//! all languages; filler words are spread around the origin. Arabic posts are
//! threat or non-threat only. A share of posts carries no manual label and is
//! keyword-dense enough for the lexicon to label it.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Label, LabeledTweet, Language};
use crate::embedding::{save_embeddings, EmbeddingFormat, EmbeddingSource, EmbeddingTable};
use crate::experiments::{ExperimentConfig, LanguageInput, Mode, ModelKind, ModelSpec};
use crate::llm_head::{save_hidden_states, HeadConfig, HiddenStateBatch};
use crate::ml::{DtConfig, LrConfig, RfConfig};
use crate::preprocess::{stem_word, LanguageResources};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub per_language: usize,
    pub dim: usize,
    pub keywords_per_class: usize,
    pub filler_words: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub keywords_per_post: usize,
    /// Share of posts left without a manual label.
    pub unlabeled_share: f64,
    /// Half-width of the uniform noise added to keyword vectors.
    pub keyword_noise: f64,
    pub hidden_len: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            per_language: 400,
            dim: 16,
            keywords_per_class: 12,
            filler_words: 60,
            min_words: 6,
            max_words: 10,
            keywords_per_post: 3,
            unlabeled_share: 0.1,
            keyword_noise: 0.3,
            hidden_len: 12,
            seed: 7,
        }
    }
}

pub struct SyntheticLanguage {
    pub lang: Language,
    pub dataset: Dataset,
    /// Surface form and score.
    pub lexicon: Vec<(String, f64)>,
    /// Keyed by stemmed form, as tokens look after preprocessing.
    pub table: EmbeddingTable,
    pub format: EmbeddingFormat,
    /// One record per post, in corpus order.
    pub hidden: HiddenStateBatch,
    /// Multi-character words for Chinese segmentation.
    pub wordlist: Vec<String>,
}

pub fn classes_for(lang: Language) -> Vec<Label> {
    if lang.allows_neutral() {
        Label::ALL.to_vec()
    } else {
        vec![Label::Threat, Label::NonThreat]
    }
}

pub fn format_for(lang: Language) -> EmbeddingFormat {
    match lang {
        Language::English | Language::Arabic => EmbeddingFormat::Word2VecBinary,
        Language::Chinese => EmbeddingFormat::Word2VecText,
        Language::Russian => EmbeddingFormat::GloveText,
    }
}

fn syllables(lang: Language) -> Vec<String> {
    let (cons, vows): (&str, &str) = match lang {
        Language::English => ("bdfgklmnprstvz", "aeiou"),
        Language::Russian => ("бвгдзклмнпрстфх", "аеиоу"),
        Language::Arabic => ("بتثجحخدذرزسشصضطظعغفقكلمن", ""),
        Language::Chinese => return Vec::new(),
    };
    let mut out = Vec::new();
    for c in cons.chars() {
        if vows.is_empty() {
            out.push(c.to_string());
        }
        for v in vows.chars() {
            out.push(format!("{c}{v}"));
        }
    }
    out
}

/// `n` words whose stems are distinct, non-empty and not stopwords.
fn pseudo_words(lang: Language, n: usize, r: &mut Rng, res: &LanguageResources, taken: &mut HashSet<String>) -> Vec<String> {
    let stop = res.stopwords(lang);
    let syl = syllables(lang);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w: String = match lang {
            Language::Chinese => (0..2)
                .map(|_| char::from_u32(0x5000 + rng::below(r, 0x0C00) as u32).expect("CJK code point"))
                .collect(),
            Language::Arabic => (0..4 + rng::below(r, 2)).map(|_| syl[rng::below(r, syl.len())].as_str()).collect(),
            _ => (0..3).map(|_| syl[rng::below(r, syl.len())].as_str()).collect(),
        };
        let s = stem_word(&w, lang);
        if s.chars().count() < 2 || stop.is_some_and(|st| st.contains(&w) || st.contains(&s)) {
            continue;
        }
        if taken.insert(s) {
            out.push(w);
        }
    }
    out
}

fn random_vector(r: &mut Rng, dim: usize, half: f64) -> Vec<f64> {
    (0..dim).map(|_| rng::uniform(r, -half, half)).collect()
}

fn join(lang: Language, words: &[&str]) -> String {
    if lang == Language::Chinese {
        words.concat()
    } else {
        words.join(" ")
    }
}

/// Decorations removed by cleaning.
fn decorate(r: &mut Rng, text: String) -> String {
    match rng::below(r, 6) {
        0 => format!("{text} https://t.co/x{}", rng::below(r, 1000)),
        1 => format!("@user{} {text}", rng::below(r, 100)),
        2 => format!("{text} #tag{}", rng::below(r, 100)),
        3 => format!("{text}!!"),
        _ => text,
    }
}

pub fn generate_language(lang: Language, cfg: &SyntheticConfig, centroids: &[Vec<f64>]) -> SyntheticLanguage {
    let res = LanguageResources::builtin();
    let mut r = rng::derived(cfg.seed, 100 + lang as u64);
    let classes = classes_for(lang);
    let mut taken = HashSet::new();
    let keywords: Vec<Vec<String>> = classes
        .iter()
        .map(|_| pseudo_words(lang, cfg.keywords_per_class, &mut r, &res, &mut taken))
        .collect();
    let fillers = pseudo_words(lang, cfg.filler_words, &mut r, &res, &mut taken);

    let source = match format_for(lang) {
        EmbeddingFormat::Word2VecBinary => EmbeddingSource::PretrainedBinary,
        EmbeddingFormat::Word2VecText => EmbeddingSource::PretrainedText,
        EmbeddingFormat::GloveText => EmbeddingSource::PretrainedGlove,
    };
    let mut table = EmbeddingTable::new(cfg.dim, lang, source);
    let mut vectors = std::collections::HashMap::new();
    for (ci, words) in keywords.iter().enumerate() {
        for w in words {
            let noise = random_vector(&mut r, cfg.dim, cfg.keyword_noise);
            let v: Vec<f64> = centroids[classes[ci].index()].iter().zip(&noise).map(|(c, n)| c + n).collect();
            vectors.insert(w.clone(), v);
        }
    }
    for w in &fillers {
        vectors.insert(w.clone(), random_vector(&mut r, cfg.dim, 0.5));
    }
    let mut all: Vec<&String> = keywords.iter().flatten().chain(&fillers).collect();
    all.sort();
    for w in all {
        let v: Vec<f32> = vectors[w].iter().map(|&x| x as f32).collect();
        table.insert(stem_word(w, lang), &v).expect("distinct stems");
    }

    let mut lexicon = Vec::new();
    for (ci, words) in keywords.iter().enumerate() {
        let score = match classes[ci] {
            Label::Threat => -1.0,
            Label::Neutral => 0.0,
            Label::NonThreat => 1.0,
        };
        lexicon.extend(words.iter().map(|w| (w.clone(), score)));
    }

    let mut tweets = Vec::with_capacity(cfg.per_language);
    let mut states = Vec::new();
    let mut mask = Vec::new();
    let mut labels = Vec::new();
    for i in 0..cfg.per_language {
        let class = classes[i % classes.len()];
        let ci = i % classes.len();
        let unlabeled = rng::unit_f64(&mut r) < cfg.unlabeled_share;
        let len = cfg.min_words + rng::below(&mut r, cfg.max_words - cfg.min_words + 1);
        let n_kw = if unlabeled { len } else { cfg.keywords_per_post.min(len) };
        let mut words: Vec<&str> = (0..len)
            .map(|k| {
                if k < n_kw {
                    keywords[ci][rng::below(&mut r, keywords[ci].len())].as_str()
                } else {
                    fillers[rng::below(&mut r, fillers.len())].as_str()
                }
            })
            .collect();
        rng::shuffle(&mut words, &mut r);
        let text = decorate(&mut r, join(lang, &words));
        let t = LabeledTweet::new(format!("{}-{i:04}", lang.code()), text, lang);
        tweets.push(if unlabeled { t } else { t.with_manual(class) });

        for t in 0..cfg.hidden_len {
            let row: Vec<f64> = match words.get(t) {
                Some(w) => vectors[*w].iter().map(|x| x + rng::uniform(&mut r, -0.1, 0.1)).collect(),
                None => random_vector(&mut r, cfg.dim, 3.0),
            };
            states.extend(row.iter().map(|&x| x as f32));
            mask.push(u8::from(t < words.len()));
        }
        labels.push(class);
    }
    let hidden = HiddenStateBatch::new(cfg.per_language, cfg.hidden_len, cfg.dim, states, mask, Some(labels))
        .expect("generated batch is consistent");
    let wordlist = if lang == Language::Chinese {
        keywords.iter().flatten().chain(&fillers).cloned().collect()
    } else {
        Vec::new()
    };
    SyntheticLanguage {
        lang,
        dataset: Dataset::new(tweets).expect("ids are unique"),
        lexicon,
        table,
        format: format_for(lang),
        hidden,
        wordlist,
    }
}

/// Class centroids shared by all languages, indexed by `Label::index`.
pub fn centroids(cfg: &SyntheticConfig) -> Vec<Vec<f64>> {
    let mut r = rng::derived(cfg.seed, 1);
    (0..3)
        .map(|c| {
            (0..cfg.dim)
                .map(|j| if j % 3 == c { 1.0 } else { 0.0 } + rng::uniform(&mut r, -0.2, 0.2))
                .collect()
        })
        .collect()
}

pub fn generate(cfg: &SyntheticConfig) -> Vec<SyntheticLanguage> {
    let c = centroids(cfg);
    Language::ALL.iter().map(|&l| generate_language(l, cfg, &c)).collect()
}

/// Files written by [`write_fixtures`], relative to its directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSet {
    pub dir: PathBuf,
    pub single_configs: Vec<(Language, PathBuf)>,
    pub combined_config: PathBuf,
}

fn embedding_file(lang: Language) -> String {
    match format_for(lang) {
        EmbeddingFormat::Word2VecBinary => format!("emb_{}.bin", lang.code()),
        EmbeddingFormat::Word2VecText => format!("emb_{}.txt", lang.code()),
        EmbeddingFormat::GloveText => format!("emb_{}.glove.txt", lang.code()),
    }
}

fn language_input(lang: Language) -> LanguageInput {
    LanguageInput {
        lang,
        data: format!("{}.jsonl", lang.code()).into(),
        lexicon: Some(format!("lexicon_{}.tsv", lang.code()).into()),
        stopwords: None,
        embeddings: Some(embedding_file(lang).into()),
        embedding_format: Some(format_for(lang)),
        hidden_states: Some(format!("{}.hsb", lang.code()).into()),
    }
}

fn base_config(mode: Mode, languages: Vec<LanguageInput>, models: Vec<ModelSpec>, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        mode,
        languages,
        models,
        zh_wordlist: Some("zh_wordlist.txt".into()),
        pooling: Default::default(),
        split_ratio: 0.8,
        seed,
        max_words: 5000,
        maxlen: 500,
        min_tokens: 2,
        skipgram: None,
        stratify_by_lang: false,
        output_dir: None,
        base_dir: PathBuf::new(),
    }
}

/// Classical models for per-language runs.
pub fn single_language_config(lang: Language, seed: u64) -> ExperimentConfig {
    let models = vec![
        ModelSpec {
            kind: ModelKind::Lr {
                config: LrConfig::default(),
            },
            name: None,
        },
        ModelSpec {
            kind: ModelKind::Dt {
                config: DtConfig::default(),
            },
            name: None,
        },
        ModelSpec {
            kind: ModelKind::Rf {
                config: RfConfig::default(),
            },
            name: None,
        },
    ];
    base_config(Mode::SingleLanguage, vec![language_input(lang)], models, seed)
}

/// One bidirectional LSTM layer of 8 units and a reduced head.
pub fn combined_config(seed: u64) -> ExperimentConfig {
    let net = crate::dl::NetworkConfig {
        seq_len: 12,
        epochs: 30,
        ..crate::dl::NetworkConfig::default()
    };
    let layers = vec![crate::dl::LayerSpec::Recurrent {
        cell: crate::dl::CellKind::Lstm,
        units: 8,
        return_sequences: false,
    }];
    let models = vec![
        ModelSpec {
            kind: ModelKind::Dl {
                config: net,
                layers: Some(layers),
            },
            name: Some("Bi-LSTM-8".into()),
        },
        ModelSpec {
            kind: ModelKind::Head {
                config: HeadConfig {
                    epochs: 20,
                    ..HeadConfig::default()
                },
            },
            name: None,
        },
    ];
    base_config(Mode::Combined, Language::ALL.iter().map(|&l| language_input(l)).collect(), models, seed)
}

/// Writes corpora, lexicons, embeddings in all three formats, hidden-state
/// files, the Chinese wordlist and ready-to-run configs.
pub fn write_fixtures(cfg: &SyntheticConfig, dir: &Path) -> crate::Result<FixtureSet> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| crate::corpus::CorpusError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let langs = generate(cfg);
    let mut single_configs = Vec::new();
    for l in &langs {
        let code = l.lang.code();
        l.dataset.write_jsonl(&dir.join(format!("{code}.jsonl")))?;
        let lex: String = l.lexicon.iter().map(|(w, s)| format!("{w}\t{s}\n")).collect();
        let p = dir.join(format!("lexicon_{code}.tsv"));
        std::fs::write(&p, lex).map_err(io(&p))?;
        save_embeddings(&l.table, &dir.join(embedding_file(l.lang)), l.format)?;
        save_hidden_states(&l.hidden, &dir.join(format!("{code}.hsb")))?;
        if l.lang == Language::Chinese {
            let p = dir.join("zh_wordlist.txt");
            std::fs::write(&p, l.wordlist.join("\n") + "\n").map_err(io(&p))?;
        }
        let name = PathBuf::from(format!("single_{code}.json"));
        write_config(&single_language_config(l.lang, cfg.seed), &dir.join(&name))?;
        single_configs.push((l.lang, name));
    }
    let combined = PathBuf::from("combined.json");
    write_config(&combined_config(cfg.seed), &dir.join(&combined))?;
    Ok(FixtureSet {
        dir: dir.to_path_buf(),
        single_configs,
        combined_config: combined,
    })
}

fn write_config(cfg: &ExperimentConfig, path: &Path) -> crate::Result<()> {
    let json = serde_json::to_string_pretty(cfg).expect("config serializes") + "\n";
    std::fs::write(path, json).map_err(|source| {
        crate::corpus::CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

/// Word pairs whose members appear in the same contexts: every sentence
/// holds one member of a pair, two of that pair's topic words and filler.
pub struct CooccurrenceFixture {
    pub corpus: Vec<Vec<String>>,
    pub pairs: Vec<(String, String)>,
}

pub fn cooccurrence_corpus(pairs: usize, fillers: usize, sentences: usize, seed: u64) -> CooccurrenceFixture {
    const TOPIC_WORDS: usize = 4;
    let mut r = rng::seeded(seed);
    let pairs: Vec<(String, String)> = (0..pairs).map(|i| (format!("pa{i}"), format!("pb{i}"))).collect();
    let filler: Vec<String> = (0..fillers).map(|i| format!("f{i}")).collect();
    let corpus = (0..sentences)
        .map(|_| {
            let p = rng::below(&mut r, pairs.len());
            let member = if rng::below(&mut r, 2) == 0 { &pairs[p].0 } else { &pairs[p].1 };
            let mut s = vec![member.clone()];
            s.extend((0..2).map(|_| format!("t{p}_{}", rng::below(&mut r, TOPIC_WORDS))));
            s.extend((0..4).map(|_| filler[rng::below(&mut r, fillers)].clone()));
            rng::shuffle(&mut s, &mut r);
            s
        })
        .collect();
    CooccurrenceFixture { corpus, pairs }
}

/// Mean cosine over the fixture's pairs and over every mismatched
/// combination of first and second members.
pub fn pair_cosines(table: &EmbeddingTable, pairs: &[(String, String)]) -> (f64, f64) {
    let cos = |a: &str, b: &str| table.cosine(a, b).unwrap_or(0.0);
    let paired = pairs.iter().map(|(a, b)| cos(a, b)).sum::<f64>() / pairs.len() as f64;
    let mut unpaired = 0.0;
    let mut n = 0usize;
    for (i, (a, _)) in pairs.iter().enumerate() {
        for (j, (_, b)) in pairs.iter().enumerate() {
            if i != j {
                unpaired += cos(a, b);
                n += 1;
            }
        }
    }
    (paired, unpaired / n.max(1) as f64)
}
