use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cell::{self, CellGrads, CellKind, CellWeights, DirCache};
use super::tensor::{add, mat_vec_t, outer_add, softmax, vec_mat, Gradients, Tensor};
use super::{shape_err, DlError, NetworkConfig, Result};
use crate::corpus::Label;
use crate::embedding::EmbeddingTable;
use crate::preprocess::Vocabulary;
use crate::rng::{self, Rng};

/// Samples per gradient accumulation chunk. Fixed so that the summation
/// order, and therefore every bit of the result, is independent of the
/// thread count.
const CHUNK: usize = 4;

pub const EMBED_INIT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Bidirectional; emits `[forward; backward]` states of width `2·units`.
    Recurrent {
        cell: CellKind,
        units: usize,
        /// When false only `[forward(T-1); backward(0)]` is emitted.
        return_sequences: bool,
    },
    /// Applied position-wise to sequences.
    Dense { units: usize, relu: bool },
    Dropout { rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Recurrent {
        kind: CellKind,
        units: usize,
        n_in: usize,
        ret_seq: bool,
        /// Tensor indices of `[w, u, b]` per direction.
        fwd: [usize; 3],
        bwd: [usize; 3],
    },
    Dense {
        w: usize,
        b: usize,
        n_in: usize,
        units: usize,
        relu: bool,
    },
    Dropout {
        rate: f64,
    },
    Output {
        w: usize,
        b: usize,
        n_in: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Act {
    steps: usize,
    width: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Inner {
    None,
    Rec(DirCache, DirCache),
    Drop(Vec<f64>),
    Out { logits: Vec<f64>, lse: f64 },
}

#[derive(Debug, Clone, PartialEq)]
struct SampleTrace {
    /// `acts[i]` is the input of layer `i`; the last entry holds probabilities.
    acts: Vec<Act>,
    inner: Vec<Inner>,
}

impl SampleTrace {
    fn probs(&self) -> &[f64] {
        &self.acts.last().expect("trace has an output").data
    }

    fn loss(&self, target: usize) -> f64 {
        match self.inner.last() {
            Some(Inner::Out { logits, lse }) => lse - logits[target],
            _ => unreachable!("last layer is the output"),
        }
    }
}

/// Activations kept by `Network::forward` for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    tokens: Vec<Vec<u32>>,
    traces: Vec<SampleTrace>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Mean cross-entropy of the cached outputs.
    pub fn loss(&self, targets: &[usize]) -> f64 {
        let sum: f64 = self.traces.iter().zip(targets).map(|(t, &y)| t.loss(y)).sum();
        sum / self.traces.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub classes: Vec<Label>,
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    params: Vec<Tensor>,
    version: u64,
}

impl Network {
    /// Builds the stack named by `cfg.arch`. Embedding rows of words found in
    /// `init` are copied from it; every other row is drawn uniformly.
    pub fn build(
        cfg: &NetworkConfig,
        classes: Vec<Label>,
        vocab: &Vocabulary,
        init: Option<&EmbeddingTable>,
    ) -> Result<Network> {
        if let Some(t) = init {
            if t.dim() != cfg.embed_dim {
                return shape_err(format!("embedding table has d={}, network expects {}", t.dim(), cfg.embed_dim));
            }
        }
        Network::build_with_rows(cfg, classes, vocab.index_space(), |i| {
            let table = init?;
            let v = table.get(vocab.word(i)?)?;
            Some(v.iter().map(|&x| x as f64).collect())
        })
    }

    /// Like `build` for an arbitrary embedding index space.
    pub fn build_with_rows(
        cfg: &NetworkConfig,
        classes: Vec<Label>,
        rows: usize,
        init: impl Fn(u32) -> Option<Vec<f64>>,
    ) -> Result<Network> {
        Network::from_layers(cfg, classes, rows, cfg.layer_specs()?, init)
    }

    /// Custom stack. The last hidden layer must leave a single vector.
    pub fn from_layers(
        cfg: &NetworkConfig,
        classes: Vec<Label>,
        rows: usize,
        specs: Vec<LayerSpec>,
        init: impl Fn(u32) -> Option<Vec<f64>>,
    ) -> Result<Network> {
        if classes.len() < 2 {
            return shape_err("a classifier needs at least two classes");
        }
        if rows < 2 || cfg.embed_dim == 0 {
            return shape_err("embedding needs at least two rows and a positive width");
        }
        let d = cfg.embed_dim;
        let mut rng = rng::seeded(cfg.seed);
        let mut emb = Tensor {
            name: "embedding".into(),
            shape: vec![rows, d],
            data: (0..rows * d).map(|_| rng::uniform(&mut rng, -EMBED_INIT, EMBED_INIT)).collect(),
        };
        for r in 0..rows {
            if let Some(v) = init(r as u32) {
                if v.len() != d {
                    return shape_err(format!("initial row {r} has length {}, expected {d}", v.len()));
                }
                emb.data[r * d..(r + 1) * d].copy_from_slice(&v);
            }
        }
        let mut params = vec![emb];
        let mut layers = Vec::new();
        let (mut width, mut seq) = (d, true);
        for (i, spec) in specs.iter().enumerate() {
            match *spec {
                LayerSpec::Recurrent {
                    cell,
                    units,
                    return_sequences,
                } => {
                    if !seq {
                        return shape_err(format!("layer {i}: recurrent layer needs a sequence input"));
                    }
                    if units == 0 {
                        return shape_err(format!("layer {i}: zero units"));
                    }
                    let gu = cell.gates() * units;
                    let mut dir = |tag: &str, rng: &mut Rng| {
                        let base = params.len();
                        params.push(Tensor::glorot(format!("l{i}.{tag}.w"), width, gu, rng));
                        params.push(Tensor::glorot(format!("l{i}.{tag}.u"), units, gu, rng));
                        params.push(Tensor::zeros(format!("l{i}.{tag}.b"), vec![gu]));
                        [base, base + 1, base + 2]
                    };
                    let fwd = dir("fwd", &mut rng);
                    let bwd = dir("bwd", &mut rng);
                    layers.push(Layer::Recurrent {
                        kind: cell,
                        units,
                        n_in: width,
                        ret_seq: return_sequences,
                        fwd,
                        bwd,
                    });
                    width = 2 * units;
                    seq = return_sequences;
                }
                LayerSpec::Dense { units, relu } => {
                    if units == 0 {
                        return shape_err(format!("layer {i}: zero units"));
                    }
                    let w = params.len();
                    params.push(Tensor::glorot(format!("l{i}.w"), width, units, &mut rng));
                    params.push(Tensor::zeros(format!("l{i}.b"), vec![units]));
                    layers.push(Layer::Dense {
                        w,
                        b: w + 1,
                        n_in: width,
                        units,
                        relu,
                    });
                    width = units;
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return shape_err(format!("layer {i}: dropout rate {rate} outside [0, 1)"));
                    }
                    layers.push(Layer::Dropout { rate });
                }
            }
        }
        if seq {
            return shape_err("the stack must end in a recurrent layer that returns one state");
        }
        let w = params.len();
        params.push(Tensor::glorot("out.w", width, classes.len(), &mut rng));
        params.push(Tensor::zeros("out.b", vec![classes.len()]));
        layers.push(Layer::Output { w, b: w + 1, n_in: width });
        Ok(Network {
            config: cfg.clone(),
            classes,
            specs,
            layers,
            params,
            version: 0,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    /// Mutable parameters. Invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [Tensor] {
        self.version += 1;
        &mut self.params
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|t| t.name == name)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.version += 1;
        self.params.iter_mut().find(|t| t.name == name)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn embedding_rows(&self) -> usize {
        self.params[0].shape[0]
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, label: Label) -> Result<usize> {
        self.classes
            .iter()
            .position(|&c| c == label)
            .ok_or(DlError::UnknownLabel(label))
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return shape_err("empty token sequence");
        }
        let rows = self.embedding_rows();
        match tokens.iter().find(|&&t| t as usize >= rows) {
            Some(t) => shape_err(format!("token index {t} outside embedding of {rows} rows")),
            None => Ok(()),
        }
    }

    fn cell<'a>(&'a self, kind: CellKind, n_in: usize, units: usize, idx: [usize; 3]) -> CellWeights<'a> {
        CellWeights {
            kind,
            n_in,
            units,
            w: &self.params[idx[0]].data,
            u: &self.params[idx[1]].data,
            b: &self.params[idx[2]].data,
        }
    }

    fn forward_sample(&self, tokens: &[u32], mut mask_rng: Option<Rng>) -> SampleTrace {
        let d = self.config.embed_dim;
        let emb = &self.params[0].data;
        let mut x = Act {
            steps: tokens.len(),
            width: d,
            data: tokens
                .iter()
                .flat_map(|&t| emb[t as usize * d..(t as usize + 1) * d].iter().copied())
                .collect(),
        };
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut inner = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, cache) = match *layer {
                Layer::Recurrent {
                    kind,
                    units,
                    n_in,
                    ret_seq,
                    fwd,
                    bwd,
                } => {
                    let t = x.steps;
                    let f = cell::run(&self.cell(kind, n_in, units, fwd), &x.data, t, false);
                    let b = cell::run(&self.cell(kind, n_in, units, bwd), &x.data, t, true);
                    let data = if ret_seq {
                        (0..t)
                            .flat_map(|s| {
                                f.h[s * units..(s + 1) * units]
                                    .iter()
                                    .chain(&b.h[s * units..(s + 1) * units])
                                    .copied()
                            })
                            .collect()
                    } else {
                        let mut v = f.h[(t - 1) * units..t * units].to_vec();
                        v.extend_from_slice(&b.h[..units]);
                        v
                    };
                    let steps = if ret_seq { t } else { 1 };
                    (
                        Act {
                            steps,
                            width: 2 * units,
                            data,
                        },
                        Inner::Rec(f, b),
                    )
                }
                Layer::Dense {
                    w,
                    b,
                    n_in,
                    units,
                    relu,
                } => {
                    let mut data = Vec::with_capacity(x.steps * units);
                    for s in 0..x.steps {
                        let mut o = self.params[b].data.clone();
                        vec_mat(&mut o, &x.data[s * n_in..(s + 1) * n_in], &self.params[w].data, units, 0);
                        if relu {
                            o.iter_mut().for_each(|v| *v = v.max(0.0));
                        }
                        data.extend(o);
                    }
                    (
                        Act {
                            steps: x.steps,
                            width: units,
                            data,
                        },
                        Inner::None,
                    )
                }
                Layer::Dropout { rate } => match mask_rng.as_mut() {
                    Some(r) if rate > 0.0 => {
                        let keep = 1.0 / (1.0 - rate);
                        let mask: Vec<f64> = (0..x.data.len())
                            .map(|_| if rng::unit_f64(r) < rate { 0.0 } else { keep })
                            .collect();
                        let data = x.data.iter().zip(&mask).map(|(a, m)| a * m).collect();
                        (Act { data, ..x.clone() }, Inner::Drop(mask))
                    }
                    _ => (x.clone(), Inner::Drop(Vec::new())),
                },
                Layer::Output { w, b, .. } => {
                    let mut logits = self.params[b].data.clone();
                    vec_mat(&mut logits, &x.data, &self.params[w].data, self.classes.len(), 0);
                    let (p, lse) = softmax(&logits);
                    (
                        Act {
                            steps: 1,
                            width: p.len(),
                            data: p,
                        },
                        Inner::Out { logits, lse },
                    )
                }
            };
            acts.push(std::mem::replace(&mut x, out));
            inner.push(cache);
        }
        acts.push(x);
        SampleTrace { acts, inner }
    }

    fn backward_sample(&self, tokens: &[u32], trace: &SampleTrace, target: usize, scale: f64, g: &mut Gradients) {
        let mut d: Vec<f64> = trace.probs().to_vec();
        d[target] -= 1.0;
        d.iter_mut().for_each(|v| *v *= scale);
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.acts[i];
            d = match (layer, &trace.inner[i]) {
                (&Layer::Output { w, b, n_in }, _) => {
                    outer_add(&mut g.dense[w], &x.data, &d, d.len(), 0);
                    add(&mut g.dense[b], &d);
                    let mut dx = vec![0.0; n_in];
                    mat_vec_t(&mut dx, &d, &self.params[w].data, d.len(), 0);
                    dx
                }
                (Layer::Dropout { .. }, Inner::Drop(mask)) => {
                    if !mask.is_empty() {
                        d.iter_mut().zip(mask).for_each(|(a, m)| *a *= m);
                    }
                    d
                }
                (
                    &Layer::Dense {
                        w,
                        b,
                        n_in,
                        units,
                        relu,
                    },
                    _,
                ) => {
                    let out = &trace.acts[i + 1].data;
                    let mut dx = vec![0.0; x.steps * n_in];
                    for s in 0..x.steps {
                        let mut dp = d[s * units..(s + 1) * units].to_vec();
                        if relu {
                            for (v, o) in dp.iter_mut().zip(&out[s * units..]) {
                                if *o <= 0.0 {
                                    *v = 0.0;
                                }
                            }
                        }
                        outer_add(&mut g.dense[w], &x.data[s * n_in..(s + 1) * n_in], &dp, units, 0);
                        add(&mut g.dense[b], &dp);
                        mat_vec_t(&mut dx[s * n_in..(s + 1) * n_in], &dp, &self.params[w].data, units, 0);
                    }
                    dx
                }
                (
                    &Layer::Recurrent {
                        kind,
                        units,
                        n_in,
                        ret_seq,
                        fwd,
                        bwd,
                    },
                    Inner::Rec(cf, cb),
                ) => {
                    let t = x.steps;
                    let mut dhf = vec![0.0; t * units];
                    let mut dhb = vec![0.0; t * units];
                    if ret_seq {
                        for s in 0..t {
                            let row = &d[s * 2 * units..(s + 1) * 2 * units];
                            dhf[s * units..(s + 1) * units].copy_from_slice(&row[..units]);
                            dhb[s * units..(s + 1) * units].copy_from_slice(&row[units..]);
                        }
                    } else {
                        dhf[(t - 1) * units..].copy_from_slice(&d[..units]);
                        dhb[..units].copy_from_slice(&d[units..]);
                    }
                    let mut dx = vec![0.0; t * n_in];
                    for (idx, cache, dh, rev) in [(fwd, cf, &dhf, false), (bwd, cb, &dhb, true)] {
                        let cw = self.cell(kind, n_in, units, idx);
                        let mut gw = std::mem::take(&mut g.dense[idx[0]]);
                        let mut gu = std::mem::take(&mut g.dense[idx[1]]);
                        let mut gb = std::mem::take(&mut g.dense[idx[2]]);
                        let mut cg = CellGrads {
                            w: &mut gw,
                            u: &mut gu,
                            b: &mut gb,
                        };
                        cell::backward(&cw, &x.data, t, rev, cache, dh, &mut cg, &mut dx);
                        g.dense[idx[0]] = gw;
                        g.dense[idx[1]] = gu;
                        g.dense[idx[2]] = gb;
                    }
                    dx
                }
                _ => unreachable!("trace matches layers"),
            };
        }
        let dim = self.config.embed_dim;
        for (s, &tok) in tokens.iter().enumerate() {
            add(g.row_mut(tok), &d[s * dim..(s + 1) * dim]);
        }
    }

    /// Class probabilities for a batch. With `train_mode` dropout masks are
    /// drawn from `seed` and the sample's position in the batch.
    pub fn forward(&self, batch: &[Vec<u32>], train_mode: bool, seed: u64) -> Result<(Vec<Vec<f64>>, ForwardCache)> {
        for t in batch {
            self.check_tokens(t)?;
        }
        let traces: Vec<SampleTrace> = batch
            .par_iter()
            .enumerate()
            .map(|(i, t)| self.forward_sample(t, train_mode.then(|| rng::derived(seed, i as u64))))
            .collect();
        let probs = traces.iter().map(|t| t.probs().to_vec()).collect();
        Ok((
            probs,
            ForwardCache {
                version: self.version,
                tokens: batch.to_vec(),
                traces,
            },
        ))
    }

    /// Gradient of the mean cross-entropy of the cached batch.
    pub fn backward(&self, cache: &ForwardCache, targets: &[usize]) -> Result<Gradients> {
        if cache.version != self.version {
            return Err(DlError::StaleCache);
        }
        if targets.len() != cache.traces.len() {
            return shape_err(format!("{} targets for {} samples", targets.len(), cache.traces.len()));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= self.classes.len()) {
            return shape_err(format!("target {t} outside {} classes", self.classes.len()));
        }
        let scale = 1.0 / targets.len().max(1) as f64;
        let idx: Vec<usize> = (0..targets.len()).collect();
        let parts: Vec<Gradients> = idx
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = Gradients::zeros_like(&self.params, Some(0));
                for &i in chunk {
                    self.backward_sample(&cache.tokens[i], &cache.traces[i], targets[i], scale, &mut g);
                }
                g
            })
            .collect();
        let mut total = Gradients::zeros_like(&self.params, Some(0));
        for p in &parts {
            total.add_assign(p);
        }
        Ok(total)
    }

    /// Mean cross-entropy and its gradient in one call.
    pub fn loss_and_gradients(
        &self,
        batch: &[Vec<u32>],
        targets: &[usize],
        train_mode: bool,
        seed: u64,
    ) -> Result<(f64, Gradients)> {
        let (_, cache) = self.forward(batch, train_mode, seed)?;
        let g = self.backward(&cache, targets)?;
        Ok((cache.loss(targets), g))
    }

    /// Mean cross-entropy without keeping activations.
    pub fn loss(&self, batch: &[Vec<u32>], targets: &[usize], train_mode: bool, seed: u64) -> Result<f64> {
        for t in batch {
            self.check_tokens(t)?;
        }
        let sum: f64 = batch
            .par_iter()
            .zip(targets)
            .enumerate()
            .map(|(i, (t, &y))| {
                self.forward_sample(t, train_mode.then(|| rng::derived(seed, i as u64)))
                    .loss(y)
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        Ok(sum / batch.len().max(1) as f64)
    }

    /// Evaluation-mode probabilities, one row per sequence.
    pub fn probabilities(&self, batch: &[Vec<u32>]) -> Result<Vec<Vec<f64>>> {
        for t in batch {
            self.check_tokens(t)?;
        }
        Ok(batch
            .par_iter()
            .map(|t| self.forward_sample(t, None).probs().to_vec())
            .collect())
    }

    /// Per-layer outputs for one sequence: the embedded input first, then
    /// every layer in order, ending with the probabilities.
    pub fn layer_outputs(&self, tokens: &[u32], train_mode: bool, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.check_tokens(tokens)?;
        let trace = self.forward_sample(tokens, train_mode.then(|| rng::derived(seed, 0)));
        Ok(trace.acts.into_iter().map(|a| a.data).collect())
    }

    /// Output-layer logits for one sequence in evaluation mode.
    pub fn logits(&self, tokens: &[u32]) -> Result<Vec<f64>> {
        self.check_tokens(tokens)?;
        match self.forward_sample(tokens, None).inner.pop() {
            Some(Inner::Out { logits, .. }) => Ok(logits),
            _ => unreachable!("last layer is the output"),
        }
    }
}
