//! Acceptance checks. Prints one line per criterion and exits non-zero when
//! any of them fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config as PropConfig, TestRunner};
use threatlens::corpus::{Label, Language};
use threatlens::dl::{CellKind, LayerSpec, Network, NetworkConfig};
use threatlens::embedding::{
    read_glove_text, read_word2vec_binary, read_word2vec_text, train_skipgram, write_glove_text, write_word2vec_binary,
    write_word2vec_text, EmbeddingTable, EncodedDataset, EncodedRecord, SkipGramConfig,
};
use threatlens::experiments::{run_experiment, ExperimentConfig, ModelKind, RunOptions, RunRecord};
use threatlens::labeling::{polarity, polarity_label, reconcile, SentimentLexicon};
use threatlens::llm_head::{read_hidden_states, write_hidden_states, HeadConfig, HeadModel, HiddenStateBatch};
use threatlens::metrics::{confusion_with_classes, report};
use threatlens::ml::{rf_predict, rf_train, DtConfig, DtNode, RfConfig};
use threatlens::preprocess::{build_vocab, clean_text, pad, tokenize, OOV_INDEX, PAD_INDEX};
use threatlens::rng::{self, Rng};
use threatlens::synthetic::{self, SyntheticConfig};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

fn offset_biases(params: &mut [threatlens::dl::Tensor]) {
    for t in params.iter_mut().filter(|t| t.name.ends_with(".b")) {
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = 0.05 + 0.01 * i as f64;
        }
    }
}

fn unit_rows(row: u32) -> Option<Vec<f64>> {
    Some((0..3).map(|j| (((row as usize * 3 + j) * 7919 % 200) as f64 / 100.0) - 1.0).collect())
}

/// Worst relative error between backprop and central differences over every
/// parameter of a network that stacks a sequence-returning bidirectional
/// layer under a collapsing one.
fn recurrent_check(cell: CellKind) -> Result<f64, String> {
    let cfg = NetworkConfig {
        embed_dim: 3,
        seed: 11,
        ..NetworkConfig::default()
    };
    let specs = vec![
        LayerSpec::Recurrent {
            cell,
            units: 2,
            return_sequences: true,
        },
        LayerSpec::Dense { units: 3, relu: true },
        LayerSpec::Dropout { rate: 0.25 },
        LayerSpec::Recurrent {
            cell,
            units: 2,
            return_sequences: false,
        },
    ];
    let mut net = Network::from_layers(&cfg, Label::ALL.to_vec(), 5, specs, unit_rows).map_err(|e| e.to_string())?;
    offset_biases(net.params_mut());
    ensure(net.parameter_count() <= 500, || format!("{cell:?} net has {} params", net.parameter_count()))?;
    let batch = vec![vec![1, 4, 2, 0], vec![3, 3, 1, 4], vec![2, 0, 0, 0]];
    let ys = [0, 2, 1];
    let seed = 9;
    let (_, g) = net.loss_and_gradients(&batch, &ys, true, seed).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for ti in 0..net.params().len() {
        let analytic = g.tensor(ti, net.params());
        for k in 0..net.params()[ti].len() {
            let orig = net.params()[ti].data[k];
            net.params_mut()[ti].data[k] = orig + h;
            let up = net.loss(&batch, &ys, true, seed).map_err(|e| e.to_string())?;
            net.params_mut()[ti].data[k] = orig - h;
            let down = net.loss(&batch, &ys, true, seed).map_err(|e| e.to_string())?;
            net.params_mut()[ti].data[k] = orig;
            worst = worst.max(rel_err(analytic[k], (up - down) / (2.0 * h)));
        }
    }
    Ok(worst)
}

fn head_check() -> Result<f64, String> {
    let cfg = HeadConfig {
        widths: vec![4, 3, 3],
        dropout_rate: 0.3,
        ..HeadConfig::default()
    };
    let mut m = HeadModel::new(&cfg, Label::ALL.to_vec(), 5).map_err(|e| e.to_string())?;
    offset_biases(&mut m.params);
    let mut r = rng::seeded(3);
    let x: Vec<Vec<f64>> = (0..6).map(|_| (0..5).map(|_| rng::uniform(&mut r, -1.5, 1.5)).collect()).collect();
    let ys = [0, 1, 2, 2, 1, 0];
    let (_, g) = m.loss_and_gradients(&x, &ys, true, 4).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for ti in 0..m.params.len() {
        let analytic = g.tensor(ti, &m.params);
        for k in 0..m.params[ti].len() {
            let orig = m.params[ti].data[k];
            m.params[ti].data[k] = orig + h;
            let up = m.loss(&x, &ys, true, 4).map_err(|e| e.to_string())?;
            m.params[ti].data[k] = orig - h;
            let down = m.loss(&x, &ys, true, 4).map_err(|e| e.to_string())?;
            m.params[ti].data[k] = orig;
            worst = worst.max(rel_err(analytic[k], (up - down) / (2.0 * h)));
        }
    }
    Ok(worst)
}

fn gradient_fidelity() -> Result<String, String> {
    let start = Instant::now();
    let mut parts = Vec::new();
    for cell in [CellKind::Rnn, CellKind::Lstm, CellKind::Gru] {
        let worst = recurrent_check(cell)?;
        ensure(worst < 1e-4, || format!("{cell:?}: relative error {worst:.2e}"))?;
        parts.push(format!("{cell:?} {worst:.1e}"));
    }
    let worst = head_check()?;
    ensure(worst < 1e-4, || format!("head: relative error {worst:.2e}"))?;
    parts.push(format!("head {worst:.1e}"));
    let took = start.elapsed();
    ensure(took < Duration::from_secs(60), || format!("took {took:?}"))?;
    Ok(format!("worst relative error {} in {:.1}s", parts.join(", "), took.as_secs_f64()))
}

fn leaf_of(mut node: &DtNode, x: &[f64]) -> Label {
    loop {
        match node {
            DtNode::Leaf { class, .. } => return *class,
            DtNode::Split {
                feature,
                threshold,
                left,
                right,
            } => node = if x[*feature] <= *threshold { left } else { right },
        }
    }
}

/// Majority over member trees; a tie goes to the class listed first in the
/// fixed order Threat, Neutral, NonThreat.
fn brute_force_mode(trees: &[DtNode], x: &[f64]) -> Label {
    let votes: Vec<Label> = trees.iter().map(|t| leaf_of(t, x)).collect();
    let count = |l: Label| votes.iter().filter(|&&v| v == l).count();
    let top = Label::ALL.iter().map(|&l| count(l)).max().unwrap_or(0);
    *Label::ALL.iter().find(|&&l| count(l) == top).expect("some class has the top count")
}

fn random_dataset(r: &mut Rng, n: usize, dim: usize) -> EncodedDataset {
    let records = (0..n)
        .map(|i| EncodedRecord {
            id: i.to_string(),
            vector: (0..dim).map(|_| (rng::below(r, 5) as f64) - 2.0).collect(),
            label: Label::ALL[rng::below(r, 3)],
            lang: Language::English,
            empty_pool: false,
        })
        .collect();
    EncodedDataset { dim, records }
}

fn oracle_equivalence() -> Result<String, String> {
    let mut r = rng::seeded(2024);
    let mut cases = 0;
    let mut ties = 0;
    for f in 0..100u64 {
        let dim = 2 + rng::below(&mut r, 3);
        let n = 20 + rng::below(&mut r, 30);
        let data = random_dataset(&mut r, n, dim);
        let cfg = RfConfig {
            n_trees: 2 + rng::below(&mut r, 7),
            tree: DtConfig {
                max_depth: Some(1 + rng::below(&mut r, 4)),
                min_samples_split: 2,
            },
            seed: f,
            ..RfConfig::default()
        };
        let forest = rf_train(&data, &cfg).map_err(|e| e.to_string())?;
        for _ in 0..10 {
            let x: Vec<f64> = (0..dim).map(|_| rng::uniform(&mut r, -3.0, 3.0)).collect();
            let got = rf_predict(&forest, &x).map_err(|e| e.to_string())?;
            let want = brute_force_mode(&forest.trees, &x);
            ensure(got == want, || format!("forest {f}: {got:?} vs brute force {want:?} at {x:?}"))?;
            let votes: Vec<Label> = forest.trees.iter().map(|t| leaf_of(t, &x)).collect();
            let mut counts: Vec<usize> = Label::ALL.iter().map(|&l| votes.iter().filter(|&&v| v == l).count()).collect();
            counts.sort_unstable();
            ties += usize::from(counts[2] == counts[1]);
            cases += 1;
        }
    }

    for m in 0..100 {
        let classes: Vec<Label> = if m % 3 == 0 {
            vec![Label::Threat, Label::NonThreat]
        } else {
            Label::ALL.to_vec()
        };
        let k = classes.len();
        let mut y_true = Vec::new();
        let mut y_pred = Vec::new();
        for t in 0..k {
            for p in 0..k {
                let n = if rng::below(&mut r, 5) == 0 { 0 } else { rng::below(&mut r, 15) };
                for _ in 0..n {
                    y_true.push(classes[t]);
                    y_pred.push(classes[p]);
                }
            }
        }
        if y_true.is_empty() {
            y_true.push(classes[0]);
            y_pred.push(classes[k - 1]);
        }
        let rep = report(&confusion_with_classes(&classes, &y_true, &y_pred).map_err(|e| e.to_string())?);
        let n = y_true.len() as f64;
        let pairs = || y_true.iter().zip(&y_pred);
        let mut correct = 0.0;
        let mut present = 0.0;
        let mut macro_f1 = 0.0;
        let mut weighted_recall = 0.0;
        for (i, &c) in classes.iter().enumerate() {
            let tp = pairs().filter(|(t, p)| **t == c && **p == c).count() as f64;
            let fp = pairs().filter(|(t, p)| **t != c && **p == c).count() as f64;
            let fn_ = pairs().filter(|(t, p)| **t == c && **p != c).count() as f64;
            let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            let got = &rep.per_class[i];
            ensure(got.label == c && got.support == (tp + fn_) as u64, || format!("matrix {m}: support of {c:?}"))?;
            for (what, a, b) in [("precision", got.precision, precision), ("recall", got.recall, recall), ("f1", got.f1, f1)] {
                ensure((a - b).abs() < 1e-12, || format!("matrix {m}: {what} of {c:?} is {a}, hand count {b}"))?;
            }
            correct += tp;
            weighted_recall += (tp + fn_) * recall / n;
            if tp + fn_ > 0.0 {
                present += 1.0;
                macro_f1 += f1;
            }
        }
        ensure((rep.accuracy - correct / n).abs() < 1e-12, || format!("matrix {m}: accuracy"))?;
        ensure((rep.macro_avg.f1 - macro_f1 / present).abs() < 1e-12, || format!("matrix {m}: macro F1"))?;
        ensure((rep.weighted_avg.recall - weighted_recall).abs() < 1e-12, || format!("matrix {m}: weighted recall"))?;
        ensure((rep.weighted_avg.recall - rep.accuracy).abs() < 1e-12, || {
            format!("matrix {m}: weighted recall {} vs accuracy {}", rep.weighted_avg.recall, rep.accuracy)
        })?;
    }
    Ok(format!("{cases} forest cases ({ties} with tied votes), 100 confusion matrices"))
}

fn labeling_exactness() -> Result<String, String> {
    let eps = 1e-9;
    let grid = [
        (-1.0, Label::Threat),
        (-0.5 - eps, Label::Threat),
        (-0.5, Label::Threat),
        (0.0, Label::Neutral),
        (0.5 - eps, Label::Neutral),
        (0.5, Label::NonThreat),
        (1.0, Label::NonThreat),
    ];
    for (p, want) in grid {
        let got = polarity_label(p).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("p = {p}: {got:?}, expected {want:?}"))?;
    }
    // Mean of word scores: two-word tweets whose scores average to each grid
    // point, padded with unknown words scoring zero.
    let lex = SentimentLexicon::parse_tsv(Language::English, "neg\t-1\nhalfneg\t-0.5\npos\t1\nhalfpos\t0.5\n")
        .map_err(|e| e.to_string())?;
    let tweets: [(&[&str], f64, Label); 6] = [
        (&["neg", "neg"], -1.0, Label::Threat),
        (&["neg", "unknown"], -0.5, Label::Threat),
        (&["halfneg", "halfneg", "unknown"], -1.0 / 3.0, Label::Neutral),
        (&["neg", "pos", "unknown"], 0.0, Label::Neutral),
        (&["pos", "unknown"], 0.5, Label::NonThreat),
        (&["halfpos", "pos", "pos", "halfpos"], 0.75, Label::NonThreat),
    ];
    for (words, value, want) in tweets {
        let got = polarity(words, &lex).map_err(|e| e.to_string())?;
        ensure(got.value == value && got.label == want && got.n == words.len(), || {
            format!("{words:?}: {got:?}, expected {value} {want:?}")
        })?;
    }
    let mut cases = 0;
    for manual in Label::ALL {
        for auto in Label::ALL {
            ensure(reconcile(Some(manual), auto) == manual, || format!("manual {manual:?}, auto {auto:?}"))?;
            cases += 1;
        }
        ensure(reconcile(None, manual) == manual, || format!("no manual label, auto {manual:?}"))?;
    }
    Ok(format!("7 boundary points, 6 lexicon tweets, {cases} override pairs"))
}

fn text_strategy() -> impl Strategy<Value = String> {
    let piece = proptest::prop_oneof![
        "[a-zA-Z]{1,8}",
        "[0-9]{1,4}",
        "[ ,.!?;:'\"()-]{1,3}",
        "https?://[a-z]{1,6}\\.[a-z]{2,3}(/[a-z0-9]{0,5})?",
        "www\\.[a-z]{1,6}\\.com",
        "@[a-zA-Z0-9_]{1,10}",
        "#[a-zA-Z0-9_]{1,10}",
        "[\u{0621}-\u{064A}]{1,6}",
        "[\u{4E00}-\u{4E80}]{1,4}",
        "[а-яА-Я]{1,7}",
        "[\u{1F600}-\u{1F64F}]",
        "[ \t\n]{1,2}",
    ];
    proptest::collection::vec(piece, 0..12).prop_map(|p| p.join(" "))
}

fn tokens_strategy() -> impl Strategy<Value = Vec<String>> {
    proptest::collection::vec("[a-f]{1,2}", 0..1200)
}

fn preprocessing_contracts() -> Result<String, String> {
    const CASES: u32 = 10_000;
    const MAXLEN: usize = 500;
    let corpus: Vec<Vec<String>> = vec![["a", "b", "c", "ab", "cd", "ee", "fa", "a", "b", "a"].map(String::from).to_vec()];
    let vocab = build_vocab(&corpus, 4).map_err(|e| e.to_string())?;
    let mut runner = TestRunner::new(PropConfig {
        cases: CASES,
        ..PropConfig::default()
    });
    let strategy = (text_strategy(), tokens_strategy());
    let mut truncated = 0;
    for _ in 0..CASES {
        let (text, tokens) = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        for lang in Language::ALL {
            let once = clean_text(&text, lang);
            let twice = clean_text(&once.text, lang);
            ensure(once.text == twice.text, || format!("{lang}: clean not idempotent on {text:?}"))?;
        }
        let ids = tokenize(&tokens, &vocab);
        ensure(ids.len() == tokens.len(), || "tokenize changed the length".into())?;
        for (t, &id) in tokens.iter().zip(&ids) {
            let want = vocab.index_of(t).unwrap_or(OOV_INDEX);
            ensure(id == want && id != PAD_INDEX, || format!("{t:?} mapped to {id}, expected {want}"))?;
        }
        let seq = pad(&ids, MAXLEN).map_err(|e| e.to_string())?;
        ensure(seq.indices.len() == MAXLEN, || format!("padded length {}", seq.indices.len()))?;
        let kept = ids.len().min(MAXLEN);
        ensure(seq.indices[..kept] == ids[..kept], || "leading tokens not kept".into())?;
        ensure(seq.indices[kept..].iter().all(|&i| i == PAD_INDEX), || "tail is not padding".into())?;
        truncated += usize::from(ids.len() > MAXLEN);
    }
    Ok(format!("{CASES} strings, {truncated} sequences truncated to {MAXLEN}"))
}

fn run_config(dir: &Path, file: &Path) -> Result<(ExperimentConfig, RunRecord), String> {
    let cfg = ExperimentConfig::load(&dir.join(file)).map_err(|e| e.to_string())?;
    let stem = file.file_stem().unwrap_or_default();
    let opts = RunOptions::new(dir.join("out").join(stem));
    let rr = run_experiment(&cfg, &opts).map_err(|e| e.to_string())?;
    Ok((cfg, rr))
}

fn synthetic_end_to_end() -> Result<String, String> {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = SyntheticConfig::default();
    ensure(cfg.per_language == 400, || "fixture size".into())?;
    let set = synthetic::write_fixtures(&cfg, tmp.path()).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for (lang, file) in &set.single_configs {
        let (_, rr) = run_config(tmp.path(), file)?;
        let accs: Vec<String> = rr
            .models
            .iter()
            .map(|m| {
                if m.report.accuracy < 0.9 {
                    failures.push(format!("{} on {lang}: {:.3}", m.name, m.report.accuracy));
                }
                format!("{} {:.3}", m.name, m.report.accuracy)
            })
            .collect();
        ensure(rr.models.len() == 3, || format!("{lang}: {} models", rr.models.len()))?;
        lines.push(format!("{lang}: {}", accs.join(" ")));
    }
    let (ccfg, rr) = run_config(tmp.path(), &set.combined_config)?;
    let lstm = rr
        .models
        .iter()
        .find(|m| m.name == "Bi-LSTM-8")
        .ok_or_else(|| "combined run has no Bi-LSTM-8".to_string())?;
    let spec = ccfg.models.iter().find_map(|m| match &m.kind {
        ModelKind::Dl { config, layers } => Some((config.epochs, layers.clone())),
        _ => None,
    });
    let (epochs, layers) = spec.ok_or_else(|| "no recurrent model configured".to_string())?;
    let units_ok = matches!(layers.as_deref(), Some([LayerSpec::Recurrent { cell: CellKind::Lstm, units: 8, .. }]));
    ensure(units_ok && epochs <= 200, || format!("recurrent model is not an 8-unit Bi-LSTM within 200 epochs: {layers:?}"))?;
    if lstm.report.accuracy < 0.9 {
        failures.push(format!("Bi-LSTM-8 combined: {:.3}", lstm.report.accuracy));
    }
    let others: Vec<String> =
        rr.models.iter().map(|m| format!("{} {:.3}", m.name, m.report.accuracy)).collect();
    lines.push(format!("combined: {} ({epochs} epochs)", others.join(" ")));
    let took = start.elapsed();
    if took >= Duration::from_secs(600) {
        failures.push(format!("took {took:?}"));
    }
    let summary = format!("{} in {:.1}s", lines.join("; "), took.as_secs_f64());
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{} [{summary}]", failures.join(", ")))
    }
}

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_threatlens"))
        .current_dir(dir)
        .args(args)
        .args(["--log-level", "warn"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn determinism() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    cli(d, &["export-fixtures", "--out-dir", "fx", "--per-language", "150"])?;
    let mut compared = 0;
    for config in ["fx/single_zh.json", "fx/combined.json"] {
        for run in ["a", "b"] {
            let out = format!("{run}/{}", config.trim_start_matches("fx/"));
            cli(d, &["--config", config, "--out-dir", &out, "--seed", "3", "experiment"])?;
        }
        for file in ["report.json", "report.txt"] {
            let name = config.trim_start_matches("fx/");
            let a = std::fs::read(d.join("a").join(name).join(file)).map_err(|e| e.to_string())?;
            let b = std::fs::read(d.join("b").join(name).join(file)).map_err(|e| e.to_string())?;
            ensure(a == b, || format!("{config}: {file} differs between runs"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} report files byte-identical across two CLI runs"))
}

fn table_bits(t: &EmbeddingTable) -> Vec<(String, Vec<u32>)> {
    t.iter().map(|(w, v)| (w.to_string(), v.iter().map(|x| x.to_bits()).collect())).collect()
}

fn format_fidelity() -> Result<String, String> {
    let words = ["threat", "مرحبا", "威胁", "угроза"];
    let vectors: [[f32; 3]; 4] = [
        [0.25, -1.5, 3.0],
        [-0.0, 1.0e-38, f32::MAX],
        [0.1, -0.2, f32::MIN_POSITIVE],
        [123456.79, -7.0e-45, 2.5],
    ];
    let expected: Vec<(String, Vec<u32>)> =
        words.iter().zip(&vectors).map(|(w, v)| (w.to_string(), v.iter().map(|x| x.to_bits()).collect())).collect();

    let mut bin = b"4 3\n".to_vec();
    for (w, v) in words.iter().zip(&vectors) {
        bin.extend_from_slice(w.as_bytes());
        bin.push(b' ');
        for x in v {
            bin.extend_from_slice(&x.to_le_bytes());
        }
        bin.push(b'\n');
    }
    let rows: String = words
        .iter()
        .zip(&vectors)
        .map(|(w, v)| format!("{w} {}\n", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")))
        .collect();
    let text = format!("4 3\n{rows}");

    let t = read_word2vec_binary(&bin[..], Language::English, Some(3)).map_err(|e| e.to_string())?;
    ensure(table_bits(&t) == expected, || "word2vec binary values differ".into())?;
    let mut out = Vec::new();
    write_word2vec_binary(&t, &mut out).map_err(|e| e.to_string())?;
    ensure(out == bin, || "word2vec binary rewrite differs".into())?;

    let t = read_word2vec_text(text.as_bytes(), Language::English, Some(3)).map_err(|e| e.to_string())?;
    ensure(table_bits(&t) == expected, || "word2vec text values differ".into())?;
    let mut out = Vec::new();
    write_word2vec_text(&t, &mut out).map_err(|e| e.to_string())?;
    ensure(out == text.as_bytes(), || "word2vec text rewrite differs".into())?;

    let t = read_glove_text(rows.as_bytes(), Language::English, Some(3)).map_err(|e| e.to_string())?;
    ensure(table_bits(&t) == expected, || "GloVe values differ".into())?;
    let mut out = Vec::new();
    write_glove_text(&t, &mut out).map_err(|e| e.to_string())?;
    ensure(out == rows.as_bytes(), || "GloVe rewrite differs".into())?;

    let mut r = rng::seeded(8);
    let (n, max_len, h) = (5, 7, 6);
    let states: Vec<f32> = (0..n * max_len * h).map(|_| rng::uniform(&mut r, -4.0, 4.0) as f32).collect();
    let mask: Vec<u8> = (0..n * max_len).map(|i| u8::from(i % max_len <= (i / max_len) + 1)).collect();
    let labels = Some((0..n).map(|i| Label::ALL[i % 3]).collect());
    let batch = HiddenStateBatch::new(n, max_len, h, states, mask, labels).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_hidden_states(&batch, &mut buf).map_err(|e| e.to_string())?;
    let back = read_hidden_states(&buf[..]).map_err(|e| e.to_string())?;
    ensure(back == batch, || "hidden-state container changed on round trip".into())?;
    let mut again = Vec::new();
    write_hidden_states(&back, &mut again).map_err(|e| e.to_string())?;
    ensure(again == buf, || "hidden-state bytes changed on rewrite".into())?;
    Ok(format!("3 embedding formats bit-exact, hidden-state container {} bytes", buf.len()))
}

fn skipgram_sanity() -> Result<String, String> {
    let fx = synthetic::cooccurrence_corpus(8, 40, 2000, 0);
    let mut wins = 0;
    let mut margins = Vec::new();
    for seed in 1..=10 {
        let cfg = SkipGramConfig {
            dim: 16,
            window: 2,
            seed,
            ..SkipGramConfig::default()
        };
        let t = train_skipgram(&fx.corpus, Language::English, &cfg).map_err(|e| e.to_string())?;
        let (paired, unpaired) = synthetic::pair_cosines(&t, &fx.pairs);
        wins += usize::from(paired > unpaired);
        margins.push(paired - unpaired);
    }
    let smallest = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let summary = format!("{wins} of 10 seeds, smallest margin {smallest:.3}");
    if wins >= 9 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn main() {
    let checks: [(&str, Check); 8] = [
        ("AC1 gradient fidelity", gradient_fidelity),
        ("AC2 oracle equivalence", oracle_equivalence),
        ("AC3 labeling exactness", labeling_exactness),
        ("AC4 preprocessing contracts", preprocessing_contracts),
        ("AC5 synthetic end-to-end", synthetic_end_to_end),
        ("AC6 determinism", determinism),
        ("AC7 format fidelity", format_fidelity),
        ("AC8 skip-gram sanity", skipgram_sanity),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 8 criteria failed");
        std::process::exit(1);
    }
}
