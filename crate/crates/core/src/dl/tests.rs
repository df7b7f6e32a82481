use super::*;
use crate::corpus::Language;
use crate::embedding::{EmbeddingSource, EmbeddingTable};
use crate::preprocess::Vocabulary;
use proptest::prelude::*;
use Label::*;

fn cfg(d: usize, seed: u64) -> NetworkConfig {
    NetworkConfig {
        embed_dim: d,
        seed,
        ..NetworkConfig::default()
    }
}

fn rec(cell: CellKind, units: usize, return_sequences: bool) -> LayerSpec {
    LayerSpec::Recurrent {
        cell,
        units,
        return_sequences,
    }
}

fn no_init(_: u32) -> Option<Vec<f64>> {
    None
}

fn three() -> Vec<Label> {
    Label::ALL.to_vec()
}

#[test]
fn parameter_count_matches_shape_arithmetic() {
    let net = Network::from_layers(&cfg(4, 1), three(), 12, vec![rec(CellKind::Lstm, 2, false)], no_init).unwrap();
    // Embedding 12×4, two LSTM directions of W 4×8, U 2×8, b 8, output 4×3 + 3.
    assert_eq!(net.parameter_count(), 48 + 2 * (32 + 16 + 8) + 15);

    let per_dir = |g: usize, n_in: usize, u: usize| g * u * (n_in + u + 1);
    let dense = |n_in: usize, u: usize| n_in * u + u;
    let c = NetworkConfig { layer_units: vec![3, 4, 5], dense_units: vec![6, 7], ..cfg(8, 1) };
    let net = Network::build_with_rows(&NetworkConfig { arch: Arch::BiRnf, ..c.clone() }, three(), 20, no_init).unwrap();
    let expected = 20 * 8
        + 2 * per_dir(1, 8, 3)
        + dense(6, 6)
        + 2 * per_dir(3, 6, 4)
        + dense(8, 7)
        + 2 * per_dir(4, 7, 5)
        + dense(10, 3);
    assert_eq!(net.parameter_count(), expected);
    let net = Network::build_with_rows(
        &NetworkConfig { arch: Arch::BiGru, dense_units: vec![6], ..c },
        vec![Threat, NonThreat],
        20,
        no_init,
    )
    .unwrap();
    let expected = 20 * 8 + 2 * per_dir(3, 8, 3) + dense(6, 6) + 2 * per_dir(3, 6, 4) + 2 * per_dir(3, 8, 5) + dense(10, 2);
    assert_eq!(net.parameter_count(), expected);
}

#[test]
fn template_shapes_are_validated() {
    let bad = NetworkConfig { layer_units: vec![8, 8], ..cfg(4, 1) };
    assert!(matches!(Network::build_with_rows(&bad, three(), 5, no_init), Err(DlError::Shape(_))));
    let bad = NetworkConfig { dropout_rate: 1.0, ..cfg(4, 1) };
    assert!(matches!(Network::build_with_rows(&bad, three(), 5, no_init), Err(DlError::Shape(_))));
    let seq_end = vec![rec(CellKind::Gru, 2, true)];
    assert!(Network::from_layers(&cfg(4, 1), three(), 5, seq_end, no_init).is_err());
    let after_collapse = vec![rec(CellKind::Gru, 2, false), rec(CellKind::Gru, 2, false)];
    assert!(Network::from_layers(&cfg(4, 1), three(), 5, after_collapse, no_init).is_err());
    assert!(Network::from_layers(&cfg(4, 1), vec![Threat], 5, vec![rec(CellKind::Rnn, 2, false)], no_init).is_err());
}

#[test]
fn pretrained_rows_are_copied() {
    let words: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
    let vocab = Vocabulary::from_ranked(words, 5000);
    let mut table = EmbeddingTable::new(4, Language::English, EmbeddingSource::PretrainedText);
    let covered = ["w1", "w4", "w9", "absent"];
    for (k, w) in covered.iter().enumerate() {
        table.insert(w.to_string(), &[k as f32 + 0.25, -1.5, 2.0, 0.125]).unwrap();
    }
    let c = NetworkConfig { layer_units: vec![2, 2, 2], dense_units: vec![2, 2], ..cfg(4, 3) };
    let net = Network::build(&c, three(), &vocab, Some(&table)).unwrap();
    let plain = Network::build(&c, three(), &vocab, None).unwrap();
    let emb = &net.tensor("embedding").unwrap().data;
    let base = &plain.tensor("embedding").unwrap().data;
    let mut copied = 0;
    for row in 0..vocab.index_space() {
        let got = &emb[row * 4..row * 4 + 4];
        match vocab.word(row as u32).and_then(|w| table.get(w)) {
            Some(v) => {
                copied += 1;
                assert_eq!(got, v.iter().map(|&x| x as f64).collect::<Vec<_>>().as_slice());
            }
            None => {
                assert_eq!(got, &base[row * 4..row * 4 + 4]);
                assert!(got.iter().all(|x| x.abs() <= network::EMBED_INIT));
            }
        }
    }
    assert_eq!(copied, 3);
    let wrong = EmbeddingTable::new(5, Language::English, EmbeddingSource::PretrainedText);
    assert!(Network::build(&c, three(), &vocab, Some(&wrong)).is_err());
}

#[test]
fn same_seed_same_parameters() {
    let c = NetworkConfig { layer_units: vec![3, 3, 3], dense_units: vec![4, 4], ..cfg(5, 17) };
    let a = Network::build_with_rows(&c, three(), 30, no_init).unwrap();
    let b = Network::build_with_rows(&c, three(), 30, no_init).unwrap();
    assert_eq!(a.params(), b.params());
    let other = Network::build_with_rows(&NetworkConfig { seed: 18, ..c }, three(), 30, no_init).unwrap();
    assert_ne!(a.params(), other.params());
}

#[test]
fn zero_output_weights_give_uniform_probabilities() {
    let mut net = Network::from_layers(&cfg(3, 2), three(), 6, vec![rec(CellKind::Gru, 4, false)], no_init).unwrap();
    net.tensor_mut("out.w").unwrap().data.iter_mut().for_each(|w| *w = 0.0);
    let (probs, _) = net.forward(&[vec![1, 2, 3], vec![5, 0]], false, 0).unwrap();
    for p in probs {
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }
}

#[test]
fn evaluation_forward_is_repeatable() {
    let c = NetworkConfig { layer_units: vec![3, 3, 3], dense_units: vec![4, 4], ..cfg(5, 4) };
    let net = Network::build_with_rows(&c, three(), 30, no_init).unwrap();
    let batch = vec![vec![3, 4, 5, 0], vec![29, 1, 1, 2]];
    let a = net.forward(&batch, false, 1).unwrap().0;
    let b = net.forward(&batch, false, 99).unwrap().0;
    assert_eq!(a, b);
    let t1 = net.forward(&batch, true, 5).unwrap().0;
    let t2 = net.forward(&batch, true, 5).unwrap().0;
    assert_eq!(t1, t2);
    assert_ne!(a, t1);
}

// Independent single-step recurrences on row-major matrices.
fn mat_row(m: &[f64], cols: usize, k: usize, j: usize) -> f64 {
    m[k * cols + j]
}

fn pre(x: &[f64], h: &[f64], w: &[f64], u: &[f64], b: &[f64], cols: usize, col: usize) -> f64 {
    let mut a = b[col];
    for (k, xk) in x.iter().enumerate() {
        a += xk * mat_row(w, cols, k, col);
    }
    for (k, hk) in h.iter().enumerate() {
        a += hk * mat_row(u, cols, k, col);
    }
    a
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Final hidden state after reading `xs` in order.
fn oracle(kind: CellKind, xs: &[Vec<f64>], w: &[f64], u: &[f64], b: &[f64], units: usize) -> Vec<f64> {
    let cols = kind.gates() * units;
    let mut h = vec![0.0; units];
    let mut c = vec![0.0; units];
    for x in xs {
        let a: Vec<f64> = (0..cols).map(|j| pre(x, &h, w, u, b, cols, j)).collect();
        h = match kind {
            CellKind::Rnn => a.iter().map(|v| v.tanh()).collect(),
            CellKind::Lstm => (0..units)
                .map(|j| {
                    c[j] = sig(a[units + j]) * c[j] + sig(a[j]) * a[2 * units + j].tanh();
                    sig(a[3 * units + j]) * c[j].tanh()
                })
                .collect(),
            CellKind::Gru => {
                let z: Vec<f64> = (0..units).map(|j| sig(a[j])).collect();
                let r: Vec<f64> = (0..units).map(|j| sig(a[units + j])).collect();
                (0..units)
                    .map(|j| {
                        let mut n = b[2 * units + j];
                        for (k, xk) in x.iter().enumerate() {
                            n += xk * mat_row(w, cols, k, 2 * units + j);
                        }
                        for k in 0..units {
                            n += r[k] * h[k] * mat_row(u, cols, k, 2 * units + j);
                        }
                        let n = n.tanh();
                        (1.0 - z[j]) * n + z[j] * h[j]
                    })
                    .collect()
            }
        };
    }
    h
}

#[test]
fn forward_matches_hand_recurrence() {
    for kind in [CellKind::Rnn, CellKind::Lstm, CellKind::Gru] {
        let mut net = Network::from_layers(&cfg(2, 8), three(), 5, vec![rec(kind, 2, false)], no_init).unwrap();
        let cols = kind.gates() * 2;
        let set = |net: &mut Network, name: &str, f: &dyn Fn(usize) -> f64| {
            let t = net.tensor_mut(name).unwrap();
            for (i, v) in t.data.iter_mut().enumerate() {
                *v = f(i);
            }
        };
        set(&mut net, "embedding", &|i| ((i * 7 % 11) as f64 - 5.0) / 6.0);
        set(&mut net, "l0.fwd.w", &|i| ((i * 3 % 7) as f64 - 3.0) / 5.0);
        set(&mut net, "l0.fwd.u", &|i| ((i * 5 % 9) as f64 - 4.0) / 7.0);
        set(&mut net, "l0.fwd.b", &|i| (i as f64 - 1.5) / 10.0);
        set(&mut net, "l0.bwd.w", &|i| ((i * 2 % 5) as f64 - 2.0) / 4.0);
        set(&mut net, "l0.bwd.u", &|i| ((i * 4 % 7) as f64 - 3.0) / 6.0);
        set(&mut net, "l0.bwd.b", &|i| (1.0 - i as f64) / 8.0);
        let emb = net.tensor("embedding").unwrap().data.clone();
        let tokens = [3u32, 1, 4];
        let xs: Vec<Vec<f64>> = tokens.iter().map(|&t| emb[t as usize * 2..t as usize * 2 + 2].to_vec()).collect();
        let p = |n: &str| net.tensor(n).unwrap().data.clone();
        assert_eq!(p("l0.fwd.w").len(), 2 * cols);
        let hf = oracle(kind, &xs, &p("l0.fwd.w"), &p("l0.fwd.u"), &p("l0.fwd.b"), 2);
        let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let hb = oracle(kind, &rev, &p("l0.bwd.w"), &p("l0.bwd.u"), &p("l0.bwd.b"), 2);
        let outs = net.layer_outputs(&tokens, false, 0).unwrap();
        let state = &outs[1];
        let expected: Vec<f64> = hf.iter().chain(&hb).copied().collect();
        for (a, b) in state.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14, "{kind:?}: {a} vs {b}");
        }
        let (ow, ob) = (p("out.w"), p("out.b"));
        let logits: Vec<f64> = (0..3).map(|j| ob[j] + (0..4).map(|k| expected[k] * ow[k * 3 + j]).sum::<f64>()).collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        for (j, pr) in outs[2].iter().enumerate() {
            assert!((pr - logits[j].exp() / z).abs() < 1e-14);
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        (a - b).abs() / 1e-7
    } else {
        (a - b).abs() / scale
    }
}

/// Largest relative error between backprop and central differences over
/// every parameter.
fn gradient_check(net: &mut Network, batch: &[Vec<u32>], targets: &[usize], seed: u64) -> f64 {
    let (_, g) = net.loss_and_gradients(batch, targets, true, seed).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for ti in 0..net.params().len() {
        let analytic = g.tensor(ti, net.params());
        for k in 0..net.params()[ti].len() {
            let orig = net.params()[ti].data[k];
            net.params_mut()[ti].data[k] = orig + h;
            let up = net.loss(batch, targets, true, seed).unwrap();
            net.params_mut()[ti].data[k] = orig - h;
            let down = net.loss(batch, targets, true, seed).unwrap();
            net.params_mut()[ti].data[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let e = rel_err(analytic[k], numeric);
            if e > worst {
                worst = e;
            }
        }
    }
    worst
}

/// Unit-scale embedding rows keep gradients well above rounding noise.
fn wide_init(row: u32) -> Option<Vec<f64>> {
    Some((0..3).map(|j| (((row as usize * 3 + j) * 7919 % 200) as f64 / 100.0) - 1.0).collect())
}

/// Zero biases put ReLU inputs exactly on the kink whenever a layer's input
/// vanishes; small distinct offsets keep the loss differentiable there.
fn offset_biases(net: &mut Network) {
    for t in net.params_mut() {
        if t.name.ends_with(".b") {
            for (i, v) in t.data.iter_mut().enumerate() {
                *v = 0.05 + 0.01 * i as f64;
            }
        }
    }
}

fn check_batch() -> (Vec<Vec<u32>>, Vec<usize>) {
    (vec![vec![1, 4, 2, 0], vec![3, 3, 1, 4], vec![2, 0, 0, 0]], vec![0, 2, 1])
}

#[test]
fn gradients_match_finite_differences_for_every_cell() {
    for kind in [CellKind::Rnn, CellKind::Lstm, CellKind::Gru] {
        let specs = vec![
            rec(kind, 2, true),
            LayerSpec::Dense { units: 3, relu: true },
            LayerSpec::Dropout { rate: 0.3 },
            rec(kind, 2, false),
        ];
        let mut net = Network::from_layers(&cfg(3, 21), three(), 5, specs, wide_init).unwrap();
        offset_biases(&mut net);
        assert!(net.parameter_count() <= 500);
        let (batch, ys) = check_batch();
        let worst = gradient_check(&mut net, &batch, &ys, 7);
        assert!(worst < 1e-4, "{kind:?}: worst relative error {worst}");
    }
}

#[test]
fn gradients_match_finite_differences_for_every_template() {
    for arch in Arch::ALL {
        let dense = if arch == Arch::BiGru { vec![2] } else { vec![2, 2] };
        let c = NetworkConfig { arch, layer_units: vec![2, 2, 2], dense_units: dense, ..cfg(3, 5) };
        let mut net = Network::build_with_rows(&c, three(), 5, wide_init).unwrap();
        offset_biases(&mut net);
        assert!(net.parameter_count() <= 500, "{}", net.parameter_count());
        let (batch, ys) = check_batch();
        let worst = gradient_check(&mut net, &batch, &ys, 3);
        assert!(worst < 1e-4, "{}: worst relative error {worst}", arch.name());
    }
}

#[test]
fn confident_correct_outputs_have_vanishing_gradient() {
    let mut net = Network::from_layers(&cfg(3, 2), three(), 6, vec![rec(CellKind::Lstm, 3, false)], no_init).unwrap();
    net.tensor_mut("out.b").unwrap().data = vec![0.0, 60.0, 0.0];
    let batch = vec![vec![1, 2], vec![3, 4, 5]];
    let (loss, g) = net.loss_and_gradients(&batch, &[1, 1], true, 0).unwrap();
    assert!(loss < 1e-20);
    assert!(g.norm() < 1e-8);
}

#[test]
fn duplicated_batch_has_the_same_mean_gradient() {
    let c = NetworkConfig { layer_units: vec![2, 3, 2], dense_units: vec![3, 2], ..cfg(3, 9) };
    let net = Network::build_with_rows(&c, three(), 6, no_init).unwrap();
    let batch = vec![vec![1, 2, 3], vec![5, 4, 0], vec![2, 2, 2]];
    let ys = [0, 1, 2];
    let (_, g1) = net.loss_and_gradients(&batch, &ys, false, 0).unwrap();
    let doubled: Vec<Vec<u32>> = batch.iter().chain(&batch).cloned().collect();
    let ys2: Vec<usize> = ys.iter().chain(&ys).copied().collect();
    let (_, g2) = net.loss_and_gradients(&doubled, &ys2, false, 0).unwrap();
    for i in 0..net.params().len() {
        let (a, b) = (g1.tensor(i, net.params()), g2.tensor(i, net.params()));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}

#[test]
fn stale_cache_is_rejected() {
    let mut net = Network::from_layers(&cfg(2, 1), three(), 4, vec![rec(CellKind::Rnn, 2, false)], no_init).unwrap();
    let (_, cache) = net.forward(&[vec![1, 2]], true, 0).unwrap();
    assert!(net.backward(&cache, &[0]).is_ok());
    net.params_mut()[0].data[0] += 1.0;
    assert!(matches!(net.backward(&cache, &[0]), Err(DlError::StaleCache)));
}

#[test]
fn reversing_input_and_directions_swaps_halves() {
    for kind in [CellKind::Rnn, CellKind::Lstm, CellKind::Gru] {
        let specs = vec![rec(kind, 3, true), rec(kind, 2, false)];
        let net = Network::from_layers(&cfg(4, 13), three(), 9, specs, no_init).unwrap();
        let mut swapped = net.clone();
        for part in ["w", "u", "b"] {
            let f = net.tensor(&format!("l0.fwd.{part}")).unwrap().data.clone();
            let b = net.tensor(&format!("l0.bwd.{part}")).unwrap().data.clone();
            swapped.tensor_mut(&format!("l0.fwd.{part}")).unwrap().data = b;
            swapped.tensor_mut(&format!("l0.bwd.{part}")).unwrap().data = f;
        }
        let tokens = vec![2u32, 7, 1, 8, 3];
        let rev: Vec<u32> = tokens.iter().rev().copied().collect();
        let a = &net.layer_outputs(&tokens, false, 0).unwrap()[1];
        let b = &swapped.layer_outputs(&rev, false, 0).unwrap()[1];
        let t = tokens.len();
        for s in 0..t {
            let ra = &a[s * 6..(s + 1) * 6];
            let rb = &b[(t - 1 - s) * 6..(t - s) * 6];
            assert_eq!(&ra[..3], &rb[3..]);
            assert_eq!(&ra[3..], &rb[..3]);
        }
    }
}

#[test]
fn dropout_averages_to_the_evaluation_output() {
    let specs = vec![
        rec(CellKind::Gru, 3, false),
        LayerSpec::Dropout { rate: 0.4 },
        LayerSpec::Dense { units: 2, relu: false },
    ];
    let net = Network::from_layers(&cfg(3, 6), three(), 5, specs, no_init).unwrap();
    let tokens = [1u32, 3, 2];
    let eval = net.layer_outputs(&tokens, false, 0).unwrap()[3].clone();
    let draws = 20_000;
    let mut mean = vec![0.0; eval.len()];
    for s in 0..draws {
        let out = &net.layer_outputs(&tokens, true, s).unwrap()[3];
        for (m, v) in mean.iter_mut().zip(out) {
            *m += v / draws as f64;
        }
    }
    let scale = eval.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for (m, e) in mean.iter().zip(&eval) {
        assert!((m - e).abs() <= 0.02 * scale, "{m} vs {e}");
    }
}

fn keyword_corpus(n: usize, seq_len: usize, seed: u64) -> SeqData {
    // Rows 2..8 are class keywords (two per class), 8..20 shared filler.
    let mut r = crate::rng::seeded(seed);
    let mut data = SeqData::default();
    for i in 0..n {
        let class = i % 3;
        let len = 3 + crate::rng::below(&mut r, seq_len - 2);
        let seq: Vec<u32> = (0..len)
            .map(|_| {
                if crate::rng::unit_f64(&mut r) < 0.5 {
                    2 + 2 * class as u32 + crate::rng::below(&mut r, 2) as u32
                } else {
                    8 + crate::rng::below(&mut r, 12) as u32
                }
            })
            .collect();
        data.seqs.push(train::fit_length(&seq, seq_len));
        data.labels.push(Label::ALL[class]);
    }
    data
}

fn small_lstm(epochs: usize) -> NetworkConfig {
    NetworkConfig {
        arch: Arch::BiLstm,
        seq_len: 8,
        embed_dim: 8,
        layer_units: vec![8, 8, 8],
        dense_units: vec![8, 8],
        dropout_rate: 0.2,
        epochs,
        batch_size: 16,
        seed: 4,
        ..NetworkConfig::default()
    }
}

#[test]
fn keyword_corpus_is_learned_by_a_small_stack() {
    let data = keyword_corpus(300, 8, 1);
    let c = small_lstm(200);
    let net = Network::build_with_rows(&c, three(), 20, no_init).unwrap();
    let (net, trace) = train(net, &data, None).unwrap();
    assert_eq!(trace.epochs.len(), 200);
    let best = trace.epochs.iter().map(|e| e.train_accuracy).fold(0.0, f64::max);
    assert!(best >= 0.95, "best train accuracy {best}");
    let (labels, _) = predict(&net, &data.seqs).unwrap();
    let acc = labels.iter().zip(&data.labels).filter(|(a, b)| a == b).count() as f64 / 300.0;
    assert_eq!(acc, trace.last().unwrap().train_accuracy);
}

#[test]
fn zero_epochs_and_repeatable_traces() {
    let data = keyword_corpus(40, 8, 2);
    let net = Network::build_with_rows(&small_lstm(0), three(), 20, no_init).unwrap();
    let (same, trace) = train(net.clone(), &data, Some(&data)).unwrap();
    assert!(trace.epochs.is_empty());
    assert_eq!(same.params(), net.params());

    let run = || {
        let net = Network::build_with_rows(&small_lstm(3), three(), 20, no_init).unwrap();
        train(net, &data, Some(&data)).unwrap()
    };
    let (a, ta) = run();
    let (b, tb) = run();
    assert_eq!(ta, tb);
    assert_eq!(a.params(), b.params());
    assert_eq!(ta.epochs.len(), 3);
    assert!(ta.epochs[0].val_loss.is_some());
    let csv = ta.to_csv();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("epoch,train_loss,train_accuracy,val_loss,val_accuracy"));

    let empty = SeqData::default();
    assert!(matches!(train(same, &empty, None), Err(DlError::EmptyDataset)));
}

#[test]
fn first_batch_loss_is_bit_reproducible() {
    let data = keyword_corpus(16, 8, 3);
    let ys: Vec<usize> = data.labels.iter().map(|l| l.index()).collect();
    let loss = || {
        let net = Network::build_with_rows(&small_lstm(1), three(), 20, no_init).unwrap();
        net.loss(&data.seqs, &ys, true, 11).unwrap()
    };
    assert_eq!(loss().to_bits(), loss().to_bits());
}

#[test]
fn prediction_keeps_order_and_count() {
    let data = keyword_corpus(7, 8, 5);
    let net = Network::build_with_rows(&small_lstm(1), three(), 20, no_init).unwrap();
    let (labels, probs) = predict(&net, &data.seqs).unwrap();
    assert_eq!(labels.len(), 7);
    for (i, p) in probs.iter().enumerate() {
        let single = net.probabilities(&data.seqs[i..i + 1]).unwrap();
        assert_eq!(&single[0], p);
    }
    assert!(predict(&net, &[vec![25]]).is_err());
}

#[test]
fn unknown_labels_are_rejected() {
    let net = Network::from_layers(&cfg(2, 1), vec![Threat, NonThreat], 4, vec![rec(CellKind::Rnn, 2, false)], no_init).unwrap();
    let data = SeqData { seqs: vec![vec![1, 2]], labels: vec![Neutral] };
    assert!(matches!(train(net, &data, None), Err(DlError::UnknownLabel(Neutral))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn softmax_rows_are_distributions(seqs in proptest::collection::vec(proptest::collection::vec(0u32..12, 1..9), 1..5), seed in 0u64..50) {
        let c = NetworkConfig { layer_units: vec![2, 3, 2], dense_units: vec![3, 2], ..cfg(3, seed) };
        let net = Network::build_with_rows(&c, three(), 12, no_init).unwrap();
        let (probs, _) = net.forward(&seqs, true, seed).unwrap();
        for p in probs {
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
