//! Subcommand implementations. Stage commands split with the same seeded
//! shuffle as experiments, so running them one after another reproduces the
//! experiment's reports.

use std::path::{Path, PathBuf};

use threatlens::corpus::{load_jsonl, split_indices, Label, Language};
use threatlens::dl::{self, Arch, Network, NetworkConfig, SeqData};
use threatlens::embedding::{
    encode_dataset, load_embeddings, load_embeddings_auto, save_embeddings, train_skipgram, EmbeddingFormat,
    EmbeddingTable, EncodedDataset, SkipGramConfig,
};
use threatlens::experiments::{
    distinct_labels, emit_report, evaluation_report, render_table, run_experiment, ExperimentConfig,
    ExperimentError, ModelKind, ReportFormat, Result, RunOptions,
};
use threatlens::labeling::{label_dataset, SentimentLexicon};
use threatlens::llm_head::{self, HeadConfig, HeadModel};
use threatlens::metrics::EvalReport;
use threatlens::ml::{self, DtConfig, LrConfig, MlModel, RfConfig};
use threatlens::preprocess::{
    build_vocab, pad, preprocess_dataset, tokenize, LanguageResources, PreprocessOptions, ProcessedTweet, Vocabulary,
};
use threatlens::synthetic::{self, SyntheticConfig};

use crate::{Cli, Command, EvalArgs, ModelChoice, ResourceArgs, SplitArgs, Subset, TrainArgs};

const DEFAULT_SEED: u64 = 1;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn invalid(path: &Path, reason: impl ToString) -> ExperimentError {
    ExperimentError::InvalidInput {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn read_input(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| invalid(path, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => std::fs::create_dir_all(dir).map_err(io_err(dir)),
        None => Ok(()),
    }
}

fn write_output(path: &Path, content: String) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, content).map_err(io_err(path))
}

fn resources(lang: Language, r: &ResourceArgs) -> Result<LanguageResources> {
    let mut res = LanguageResources::builtin();
    if let Some(p) = &r.stopwords {
        res.load_stopwords(lang, p)?;
    }
    if let Some(p) = &r.zh_wordlist {
        res.load_zh_wordlist(p)?;
    }
    Ok(res)
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match &cli.command {
        Command::Label(a) => {
            let res = resources(a.lang, &a.resources)?;
            let ds = load_jsonl(&a.input, Some(a.lang))?;
            let lex = SentimentLexicon::load_tsv(a.lang, &a.lexicon)?;
            let (labeled, stats) = label_dataset(&ds, &lex, &res)?;
            ensure_parent(&a.output)?;
            labeled.write_jsonl(&a.output)?;
            println!("{}", serde_json::to_string(&stats).expect("stats serialize"));
            Ok(())
        }
        Command::Preprocess(a) => {
            let res = resources(a.lang, &a.resources)?;
            let ds = load_jsonl(&a.input, Some(a.lang))?;
            let opts = PreprocessOptions {
                min_tokens: a.min_tokens,
            };
            let (tweets, drops) = preprocess_dataset(&ds, &res, opts)?;
            let kept: Vec<&ProcessedTweet> = tweets.iter().filter(|t| a.keep_unlabeled || t.label.is_some()).collect();
            let body: String = kept
                .iter()
                .map(|t| serde_json::to_string(t).expect("tweet serializes") + "\n")
                .collect();
            write_output(&a.output, body)?;
            log::info!("kept {} of {} posts", kept.len(), ds.len());
            println!("{}", serde_json::to_string(&drops).expect("stats serialize"));
            Ok(())
        }
        Command::Embed(a) => {
            let tweets = read_processed(&a.input)?;
            let table = match &a.embeddings {
                Some(p) => load_table(p, a.format, a.lang)?,
                None => {
                    let corpus: Vec<Vec<&str>> =
                        tweets.iter().map(|t| t.tokens.iter().map(String::as_str).collect()).collect();
                    let cfg = SkipGramConfig {
                        dim: a.dim,
                        seed,
                        ..SkipGramConfig::default()
                    };
                    let t = train_skipgram(&corpus, a.lang, &cfg)?;
                    if let Some(out) = &a.save_embeddings {
                        ensure_parent(out)?;
                        save_embeddings(&t, out, EmbeddingFormat::Word2VecText)?;
                    }
                    t
                }
            };
            let enc = encode_dataset(&tweets, &table, a.pooling)?;
            log::info!("{} posts encoded, {} with no known word", enc.len(), enc.empty_pools());
            write_output(&a.output, serde_json::to_string(&enc).expect("dataset serializes"))
        }
        Command::Train(a) => train(a, seed),
        Command::Eval(a) => {
            let rep = eval(a, seed)?;
            let json = serde_json::to_string_pretty(&rep).expect("report serializes") + "\n";
            match &a.output {
                Some(p) => write_output(p, json),
                None => {
                    print!("{json}");
                    Ok(())
                }
            }
        }
        Command::Experiment(a) => {
            let path = cli
                .config
                .as_ref()
                .ok_or_else(|| ExperimentError::Config("experiment needs --config".into()))?;
            let mut cfg = ExperimentConfig::load(path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cfg.stratify_by_lang |= a.stratify_by_lang;
            if a.pool_include_padding {
                for m in &mut cfg.models {
                    if let ModelKind::Head { config } = &mut m.kind {
                        config.pool_include_padding = true;
                    }
                }
            }
            let out_dir = cli
                .out_dir
                .clone()
                .or_else(|| cfg.output_dir.as_ref().map(|p| cfg.resolve(p)))
                .unwrap_or_else(|| PathBuf::from("out"));
            let opts = RunOptions {
                out_dir: out_dir.clone(),
                parallel_models: a.parallel_models.max(1),
                persist_models: !a.no_models,
            };
            let rr = run_experiment(&cfg, &opts)?;
            emit_report(&rr, &out_dir, &[ReportFormat::Json, ReportFormat::Table])?;
            print!("{}", render_table(&rr));
            Ok(())
        }
        Command::ExportFixtures(a) => {
            let dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("fixtures"));
            let cfg = SyntheticConfig {
                per_language: a.per_language,
                dim: a.dim,
                seed: cli.seed.unwrap_or(SyntheticConfig::default().seed),
                ..SyntheticConfig::default()
            };
            let set = synthetic::write_fixtures(&cfg, &dir)?;
            for (_, p) in &set.single_configs {
                println!("{}", dir.join(p).display());
            }
            println!("{}", dir.join(&set.combined_config).display());
            Ok(())
        }
        Command::ValidateConfig => {
            let path = cli
                .config
                .as_ref()
                .ok_or_else(|| ExperimentError::Config("validate-config needs --config".into()))?;
            let cfg = ExperimentConfig::load(path)?;
            cfg.validate()?;
            println!(
                "{}: ok ({} language(s), {} model(s))",
                path.display(),
                cfg.languages.len(),
                cfg.models.len()
            );
            Ok(())
        }
    }
}

fn read_processed(path: &Path) -> Result<Vec<ProcessedTweet>> {
    read_input(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| invalid(path, format!("line {}: {e}", i + 1))))
        .collect()
}

fn load_table(path: &Path, format: Option<EmbeddingFormat>, lang: Language) -> Result<EmbeddingTable> {
    Ok(match format {
        Some(f) => load_embeddings(path, f, lang, None)?,
        None => load_embeddings_auto(path, lang, None)?.0,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_input(path)?).map_err(|e| invalid(path, e))
}

fn model_config<T: serde::de::DeserializeOwned + Default + serde::Serialize>(path: &Option<PathBuf>) -> Result<T> {
    overlay(path, T::default())
}

/// Fields present in the model config file replace those of `base`.
fn overlay<T: serde::de::DeserializeOwned + serde::Serialize>(path: &Option<PathBuf>, base: T) -> Result<T> {
    let Some(p) = path else { return Ok(base) };
    let bad = |e: &dyn std::fmt::Display| ExperimentError::Config(format!("model config {}: {e}", p.display()));
    let s = std::fs::read_to_string(p).map_err(|e| bad(&e))?;
    let fields: serde_json::Value = serde_json::from_str(&s).map_err(|e| bad(&e))?;
    let serde_json::Value::Object(fields) = fields else {
        return Err(bad(&"expected a JSON object"));
    };
    let mut merged = serde_json::to_value(base).expect("config serializes");
    merged.as_object_mut().expect("config is an object").extend(fields);
    serde_json::from_value(merged).map_err(|e| bad(&e))
}

/// Labeled posts as padded index sequences over a vocabulary built on all
/// of them.
struct Sequences {
    data: SeqData,
    vocab: Vocabulary,
    lang: Language,
}

fn sequences(s: &SplitArgs, vocab: Option<Vocabulary>) -> Result<Sequences> {
    let tweets: Vec<ProcessedTweet> = read_processed(&s.input)?.into_iter().filter(|t| t.label.is_some()).collect();
    let lang = match (s.lang, tweets.first()) {
        (Some(l), _) => l,
        (None, Some(t)) => t.lang,
        (None, None) => return Err(invalid(&s.input, "no labeled posts")),
    };
    let vocab = match vocab {
        Some(v) => v,
        None => {
            let tokens: Vec<Vec<String>> = tweets.iter().map(|t| t.tokens.clone()).collect();
            build_vocab(&tokens, s.max_words)?
        }
    };
    let seqs = tweets
        .iter()
        .map(|t| Ok(pad(&tokenize(&t.tokens, &vocab), s.maxlen)?.indices))
        .collect::<Result<Vec<_>>>()?;
    let labels = tweets.iter().map(|t| t.label.expect("filtered")).collect();
    Ok(Sequences {
        data: SeqData { seqs, labels },
        vocab,
        lang,
    })
}

fn pooled_hidden(s: &SplitArgs) -> Result<(Vec<Vec<f64>>, Vec<Label>)> {
    let b = llm_head::load_hidden_states(&s.input)?;
    let labels = b.labels.clone().ok_or(llm_head::HeadError::MissingLabels)?;
    Ok((llm_head::global_average_pool(&b, s.pool_include_padding), labels))
}

fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

fn fit(data: &SeqData, idx: &[usize], seq_len: usize) -> SeqData {
    let s = data.subset(idx);
    SeqData {
        seqs: s.seqs.iter().map(|q| dl::train::fit_length(q, seq_len)).collect(),
        labels: s.labels,
    }
}

fn vocab_path(model: &Path) -> PathBuf {
    model.with_extension("vocab.json")
}

fn arch_of(m: ModelChoice) -> Option<Arch> {
    match m {
        ModelChoice::Birnf => Some(Arch::BiRnf),
        ModelChoice::Bilstm => Some(Arch::BiLstm),
        ModelChoice::Bigru => Some(Arch::BiGru),
        _ => None,
    }
}

fn train(a: &TrainArgs, seed: u64) -> Result<()> {
    let s = &a.split;
    ensure_parent(&a.output)?;
    match a.model {
        ModelChoice::Lr | ModelChoice::Dt | ModelChoice::Rf => {
            let enc: EncodedDataset = read_json(&s.input)?;
            let (tr, _) = split_indices(enc.len(), s.split_ratio, seed)?;
            let train = enc.subset(&tr);
            let model = match a.model {
                ModelChoice::Lr => MlModel::Lr(ml::lr_train(&train, &model_config::<LrConfig>(&a.model_config)?)?),
                ModelChoice::Dt => MlModel::Dt(ml::dt_train(&train, &model_config::<DtConfig>(&a.model_config)?)?),
                _ => {
                    let cfg = RfConfig {
                        seed,
                        ..model_config::<RfConfig>(&a.model_config)?
                    };
                    MlModel::Rf(ml::rf_train(&train, &cfg)?)
                }
            };
            model.save(&a.output)?;
        }
        ModelChoice::Birnf | ModelChoice::Bilstm | ModelChoice::Bigru => {
            let arch = arch_of(a.model).expect("recurrent choice");
            let seqs = sequences(s, None)?;
            let table = match &s.embeddings {
                Some(p) => Some(load_table(p, s.format, seqs.lang)?),
                None => None,
            };
            let base = overlay(&a.model_config, NetworkConfig::for_arch(arch))?;
            let cfg = NetworkConfig {
                arch,
                seed,
                embed_dim: table.as_ref().map_or(base.embed_dim, EmbeddingTable::dim),
                ..base
            };
            let classes = distinct_labels(&seqs.data.labels);
            let net = Network::build(&cfg, classes, &seqs.vocab, table.as_ref())?;
            let (tr, _) = split_indices(seqs.data.len(), s.split_ratio, seed)?;
            let (net, trace) = dl::train(net, &fit(&seqs.data, &tr, cfg.seq_len), None)?;
            dl::io::save_network(&net, &a.output)?;
            let vp = vocab_path(&a.output);
            write_output(&vp, serde_json::to_string(&seqs.vocab).expect("vocabulary serializes"))?;
            if let Some(t) = &a.trace {
                write_output(t, trace.to_csv())?;
            }
        }
        ModelChoice::Head => {
            let (x, labels) = pooled_hidden(s)?;
            let (tr, _) = split_indices(x.len(), s.split_ratio, seed)?;
            let cfg = HeadConfig {
                seed,
                pool_include_padding: s.pool_include_padding,
                ..model_config::<HeadConfig>(&a.model_config)?
            };
            let (m, trace) = llm_head::head_train_pooled(
                &pick(&x, &tr),
                &pick(&labels, &tr),
                Some(distinct_labels(&labels)),
                &cfg,
                None,
            )?;
            llm_head::save_head(&m, &a.output)?;
            if let Some(t) = &a.trace {
                write_output(t, trace.to_csv())?;
            }
        }
    }
    log::info!("model written to {}", a.output.display());
    Ok(())
}

enum Loaded {
    Ml(MlModel),
    Dl(Box<Network>),
    Head(HeadModel),
}

fn load_model(path: &Path) -> Result<Loaded> {
    let bytes = std::fs::read(path).map_err(|e| invalid(path, e))?;
    if bytes.starts_with(dl::io::MAGIC) {
        return Ok(Loaded::Dl(Box::new(dl::io::load_network(path)?)));
    }
    let v: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| invalid(path, e))?;
    if v.get("model_type").is_some() {
        Ok(Loaded::Ml(MlModel::load(path)?))
    } else if v.get("input_dim").is_some() {
        Ok(Loaded::Head(llm_head::load_head(path)?))
    } else {
        Err(invalid(path, "not a recognized model file"))
    }
}

fn subset_indices(n: usize, s: &SplitArgs, subset: Subset, seed: u64) -> Result<Vec<usize>> {
    let (tr, te) = split_indices(n, s.split_ratio, seed)?;
    Ok(match subset {
        Subset::Train => tr,
        Subset::Test => te,
        Subset::All => (0..n).collect(),
    })
}

fn eval(a: &EvalArgs, seed: u64) -> Result<EvalReport> {
    let s = &a.split;
    match load_model(&a.model)? {
        Loaded::Ml(model) => {
            let enc: EncodedDataset = read_json(&s.input)?;
            let classes = distinct_labels(&enc.labels());
            let part = enc.subset(&subset_indices(enc.len(), s, a.subset, seed)?);
            let y_pred = ml::predict_all(&model, &part)?;
            let probs = part
                .records
                .iter()
                .map(|r| model.predict_proba(&r.vector).map(|p| p.to_vec()))
                .collect::<ml::Result<Vec<_>>>()?;
            Ok(evaluation_report(&classes, &part.labels(), &y_pred, &probs, &Label::ALL)?)
        }
        Loaded::Dl(net) => {
            let vp = vocab_path(&a.model);
            let vocab: Vocabulary = read_json(&vp)?;
            let seqs = sequences(s, Some(vocab))?;
            let classes = distinct_labels(&seqs.data.labels);
            let part = fit(&seqs.data, &subset_indices(seqs.data.len(), s, a.subset, seed)?, net.config.seq_len);
            let (y_pred, probs) = dl::predict(&net, &part.seqs)?;
            Ok(evaluation_report(&classes, &part.labels, &y_pred, &probs, &net.classes)?)
        }
        Loaded::Head(m) => {
            let (x, labels) = pooled_hidden(&SplitArgs {
                pool_include_padding: s.pool_include_padding || m.config.pool_include_padding,
                ..s.clone()
            })?;
            let classes = distinct_labels(&labels);
            let idx = subset_indices(x.len(), s, a.subset, seed)?;
            let (y_pred, probs) = llm_head::head_predict_pooled(&m, &pick(&x, &idx))?;
            Ok(evaluation_report(&classes, &pick(&labels, &idx), &y_pred, &probs, &m.classes)?)
        }
    }
}
