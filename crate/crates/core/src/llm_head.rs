//! Classification head over exported transformer hidden states.
//!
//! The head averages the last hidden states over unmasked positions and runs
//! the pooled vector through ReLU dense layers (128, 64, 32 by default), each
//! followed by dropout, and a softmax output.
//!
//! Hidden states are read from an `HSB1` file: magic `HSB1`, `u32` header
//! length, header JSON `{n, max_len, h, has_labels}`, then little-endian
//! `f32` states (`n × max_len × h`), `u8` masks (`n × max_len`) and, when
//! present, `u16` class indices.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::dl::tensor::{add, adam_step, argmax, mat_vec_t, outer_add, softmax, vec_mat, AdamConfig, AdamState, Gradients, Tensor};
use crate::dl::{EpochStats, TrainTrace};
use crate::rng::{self, Rng};

pub const MAGIC: &[u8; 4] = b"HSB1";
pub const DEFAULT_MAX_LEN: usize = 100;

#[derive(Debug, Error)]
pub enum HeadError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("batch has no labels")]
    MissingLabels,
    #[error("training data is empty")]
    EmptyDataset,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, HeadError>;

fn parse_err(e: impl std::fmt::Display) -> HeadError {
    HeadError::Parse(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct ContainerHeader {
    n: usize,
    max_len: usize,
    h: usize,
    has_labels: bool,
}

/// `n` records of `max_len × h` hidden states with attention masks.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStateBatch {
    pub n: usize,
    pub max_len: usize,
    pub h: usize,
    pub states: Vec<f32>,
    pub mask: Vec<u8>,
    pub labels: Option<Vec<Label>>,
}

impl HiddenStateBatch {
    /// Checks buffer sizes, binary masks and at least one position per row.
    pub fn new(n: usize, max_len: usize, h: usize, states: Vec<f32>, mask: Vec<u8>, labels: Option<Vec<Label>>) -> Result<Self> {
        if states.len() != n * max_len * h {
            return Err(HeadError::Shape(format!("{} state values for {n}×{max_len}×{h}", states.len())));
        }
        if mask.len() != n * max_len {
            return Err(HeadError::Shape(format!("{} mask values for {n}×{max_len}", mask.len())));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(HeadError::Shape(format!("{} labels for {n} records", l.len())));
            }
        }
        if mask.iter().any(|&m| m > 1) {
            return Err(HeadError::Shape("mask values must be 0 or 1".into()));
        }
        if max_len == 0 || h == 0 {
            return Err(HeadError::Shape("max_len and h must be positive".into()));
        }
        if let Some(row) = (0..n).find(|&i| mask[i * max_len..(i + 1) * max_len].iter().all(|&m| m == 0)) {
            return Err(HeadError::Shape(format!("record {row} has an all-zero mask")));
        }
        Ok(HiddenStateBatch {
            n,
            max_len,
            h,
            states,
            mask,
            labels,
        })
    }

    /// One position per record holding the given vector.
    pub fn from_vectors(vectors: &[Vec<f64>], labels: Option<Vec<Label>>) -> Result<Self> {
        let h = vectors.first().map_or(0, Vec::len);
        if vectors.iter().any(|v| v.len() != h) {
            return Err(HeadError::Shape("vectors differ in length".into()));
        }
        let states = vectors.iter().flatten().map(|&x| x as f32).collect();
        HiddenStateBatch::new(vectors.len(), 1, h, states, vec![1; vectors.len()], labels)
    }

    pub fn record(&self, i: usize) -> (&[f32], &[u8]) {
        let s = self.max_len * self.h;
        (&self.states[i * s..(i + 1) * s], &self.mask[i * self.max_len..(i + 1) * self.max_len])
    }
}

pub fn write_hidden_states<W: Write>(b: &HiddenStateBatch, mut w: W) -> Result<()> {
    let header = ContainerHeader {
        n: b.n,
        max_len: b.max_len,
        h: b.h,
        has_labels: b.labels.is_some(),
    };
    let json = serde_json::to_vec(&header).map_err(parse_err)?;
    let mut buf = Vec::with_capacity(8 + json.len() + b.states.len() * 4 + b.mask.len() + b.n * 2);
    buf.extend_from_slice(MAGIC);
    buf.write_u32::<LittleEndian>(json.len() as u32).map_err(parse_err)?;
    buf.extend_from_slice(&json);
    for &v in &b.states {
        buf.write_f32::<LittleEndian>(v).map_err(parse_err)?;
    }
    buf.extend_from_slice(&b.mask);
    if let Some(labels) = &b.labels {
        for l in labels {
            buf.write_u16::<LittleEndian>(l.index() as u16).map_err(parse_err)?;
        }
    }
    w.write_all(&buf).map_err(parse_err)
}

pub fn read_hidden_states<R: Read>(mut r: R) -> Result<HiddenStateBatch> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(parse_err)?;
    if &magic != MAGIC {
        return Err(HeadError::Parse("bad magic bytes".into()));
    }
    let len = r.read_u32::<LittleEndian>().map_err(parse_err)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(parse_err)?;
    let hd: ContainerHeader = serde_json::from_slice(&json).map_err(parse_err)?;
    let total = hd
        .n
        .checked_mul(hd.max_len)
        .and_then(|x| x.checked_mul(hd.h))
        .ok_or_else(|| HeadError::Parse("header sizes overflow".into()))?;
    let mut raw = vec![0u8; total * 4];
    r.read_exact(&mut raw).map_err(parse_err)?;
    let states: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if states.iter().any(|v| !v.is_finite()) {
        return Err(HeadError::Parse("non-finite hidden state".into()));
    }
    let mut mask = vec![0u8; hd.n * hd.max_len];
    r.read_exact(&mut mask).map_err(parse_err)?;
    let labels = if hd.has_labels {
        let mut out = Vec::with_capacity(hd.n);
        for _ in 0..hd.n {
            let i = r.read_u16::<LittleEndian>().map_err(parse_err)?;
            out.push(Label::from_index(i as usize).ok_or_else(|| HeadError::Parse(format!("label index {i}")))?);
        }
        Some(out)
    } else {
        None
    };
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(parse_err)?;
    if !rest.is_empty() {
        return Err(HeadError::Parse(format!("{} trailing bytes", rest.len())));
    }
    HiddenStateBatch::new(hd.n, hd.max_len, hd.h, states, mask, labels)
}

pub fn save_hidden_states(b: &HiddenStateBatch, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    write_hidden_states(b, &mut bytes)?;
    std::fs::write(path, bytes).map_err(|source| HeadError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_hidden_states(path: &Path) -> Result<HiddenStateBatch> {
    let f = std::fs::File::open(path).map_err(|source| HeadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_hidden_states(std::io::BufReader::new(f))
}

/// Per-record mean over masked-in positions, or over all positions when
/// `include_padding` is set.
pub fn global_average_pool(b: &HiddenStateBatch, include_padding: bool) -> Vec<Vec<f64>> {
    (0..b.n)
        .map(|i| {
            let (states, mask) = b.record(i);
            let mut acc = vec![0.0f64; b.h];
            let mut count = 0usize;
            for (t, &m) in mask.iter().enumerate() {
                if m == 1 || include_padding {
                    count += 1;
                    for (a, &v) in acc.iter_mut().zip(&states[t * b.h..(t + 1) * b.h]) {
                        *a += v as f64;
                    }
                }
            }
            acc.iter_mut().for_each(|a| *a /= count as f64);
            acc
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub widths: Vec<usize>,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub pool_include_padding: bool,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            widths: vec![128, 64, 32],
            dropout_rate: 0.4,
            learning_rate: 0.0005,
            batch_size: 16,
            epochs: 50,
            seed: 1,
            pool_include_padding: false,
        }
    }
}

/// Dense stack weights; tensors alternate weight `[in, out]` and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadModel {
    pub config: HeadConfig,
    pub classes: Vec<Label>,
    pub input_dim: usize,
    pub params: Vec<Tensor>,
}

struct HeadTrace {
    /// Input of each dense layer, then the probabilities.
    acts: Vec<Vec<f64>>,
    /// Post-ReLU outputs of hidden layers.
    relu: Vec<Vec<f64>>,
    masks: Vec<Vec<f64>>,
    logits: Vec<f64>,
    lse: f64,
}

impl HeadModel {
    pub fn new(cfg: &HeadConfig, classes: Vec<Label>, input_dim: usize) -> Result<HeadModel> {
        if classes.len() < 2 {
            return Err(HeadError::Shape("a classifier needs at least two classes".into()));
        }
        if input_dim == 0 || cfg.widths.contains(&0) {
            return Err(HeadError::Shape("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&cfg.dropout_rate) {
            return Err(HeadError::Shape(format!("dropout rate {} outside [0, 1)", cfg.dropout_rate)));
        }
        let mut r = rng::seeded(cfg.seed);
        let mut params = Vec::new();
        let mut n_in = input_dim;
        for (i, &w) in cfg.widths.iter().chain(std::iter::once(&classes.len())).enumerate() {
            params.push(Tensor::glorot(format!("d{i}.w"), n_in, w, &mut r));
            params.push(Tensor::zeros(format!("d{i}.b"), vec![w]));
            n_in = w;
        }
        Ok(HeadModel {
            config: cfg.clone(),
            classes,
            input_dim,
            params,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    fn n_layers(&self) -> usize {
        self.params.len() / 2
    }

    fn forward(&self, x: &[f64], mut mask_rng: Option<Rng>) -> HeadTrace {
        let mut acts = vec![x.to_vec()];
        let mut relu = Vec::new();
        let mut masks = Vec::new();
        let last = self.n_layers() - 1;
        let rate = self.config.dropout_rate;
        for l in 0..=last {
            let (w, b) = (&self.params[2 * l], &self.params[2 * l + 1]);
            let mut z = b.data.clone();
            vec_mat(&mut z, acts.last().expect("input"), &w.data, w.shape[1], 0);
            if l == last {
                let (p, lse) = softmax(&z);
                acts.push(p);
                return HeadTrace {
                    acts,
                    relu,
                    masks,
                    logits: z,
                    lse,
                };
            }
            z.iter_mut().for_each(|v| *v = v.max(0.0));
            let mask: Vec<f64> = match mask_rng.as_mut() {
                Some(r) if rate > 0.0 => (0..z.len())
                    .map(|_| if rng::unit_f64(r) < rate { 0.0 } else { 1.0 / (1.0 - rate) })
                    .collect(),
                _ => Vec::new(),
            };
            let out = if mask.is_empty() {
                z.clone()
            } else {
                z.iter().zip(&mask).map(|(a, m)| a * m).collect()
            };
            relu.push(z);
            masks.push(mask);
            acts.push(out);
        }
        unreachable!("the output layer returns")
    }

    fn backward(&self, tr: &HeadTrace, target: usize, scale: f64, g: &mut Gradients) {
        let mut d: Vec<f64> = tr.acts.last().expect("probs").clone();
        d[target] -= 1.0;
        d.iter_mut().for_each(|v| *v *= scale);
        for l in (0..self.n_layers()).rev() {
            if l < self.n_layers() - 1 {
                if !tr.masks[l].is_empty() {
                    d.iter_mut().zip(&tr.masks[l]).for_each(|(a, m)| *a *= m);
                }
                d.iter_mut().zip(&tr.relu[l]).for_each(|(a, z)| {
                    if *z <= 0.0 {
                        *a = 0.0
                    }
                });
            }
            let w = &self.params[2 * l];
            let x = &tr.acts[l];
            outer_add(&mut g.dense[2 * l], x, &d, w.shape[1], 0);
            add(&mut g.dense[2 * l + 1], &d);
            let mut dx = vec![0.0; x.len()];
            mat_vec_t(&mut dx, &d, &w.data, w.shape[1], 0);
            d = dx;
        }
    }

    fn check_input(&self, x: &[Vec<f64>]) -> Result<()> {
        match x.iter().find(|v| v.len() != self.input_dim) {
            Some(v) => Err(HeadError::Shape(format!("input width {}, head expects {}", v.len(), self.input_dim))),
            None => Ok(()),
        }
    }

    /// Mean cross-entropy and its gradient over pooled inputs.
    pub fn loss_and_gradients(&self, x: &[Vec<f64>], targets: &[usize], train_mode: bool, seed: u64) -> Result<(f64, Gradients)> {
        self.check_input(x)?;
        let scale = 1.0 / x.len().max(1) as f64;
        let mut g = Gradients::zeros_like(&self.params, None);
        let mut loss = 0.0;
        for (i, (xi, &y)) in x.iter().zip(targets).enumerate() {
            let tr = self.forward(xi, train_mode.then(|| rng::derived(seed, i as u64)));
            loss += tr.lse - tr.logits[y];
            self.backward(&tr, y, scale, &mut g);
        }
        Ok((loss * scale, g))
    }

    pub fn loss(&self, x: &[Vec<f64>], targets: &[usize], train_mode: bool, seed: u64) -> Result<f64> {
        self.check_input(x)?;
        let sum: f64 = x
            .iter()
            .zip(targets)
            .enumerate()
            .map(|(i, (xi, &y))| {
                let tr = self.forward(xi, train_mode.then(|| rng::derived(seed, i as u64)));
                tr.lse - tr.logits[y]
            })
            .sum();
        Ok(sum / x.len().max(1) as f64)
    }

    /// Evaluation-mode probabilities.
    pub fn probabilities(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        Ok(x.par_iter()
            .map(|xi| self.forward(xi, None).acts.pop().expect("probs"))
            .collect())
    }

    pub fn class_index(&self, l: Label) -> Result<usize> {
        self.classes
            .iter()
            .position(|&c| c == l)
            .ok_or_else(|| HeadError::Shape(format!("label {l} is not an output class")))
    }
}

fn class_list(labels: &[Label]) -> Vec<Label> {
    let mut c = labels.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}

fn evaluate(m: &HeadModel, x: &[Vec<f64>], ys: &[usize]) -> Result<(f64, f64)> {
    let probs = m.probabilities(x)?;
    let mut loss = 0.0;
    let mut hits = 0usize;
    for (p, &y) in probs.iter().zip(ys) {
        loss -= p[y].max(f64::MIN_POSITIVE).ln();
        hits += usize::from(argmax(p) == y);
    }
    let n = ys.len().max(1) as f64;
    Ok((loss / n, hits as f64 / n))
}

/// Trains on already pooled vectors. Classes are the distinct training
/// labels unless given.
pub fn head_train_pooled(
    x: &[Vec<f64>],
    labels: &[Label],
    classes: Option<Vec<Label>>,
    cfg: &HeadConfig,
    val: Option<(&[Vec<f64>], &[Label])>,
) -> Result<(HeadModel, TrainTrace)> {
    if x.is_empty() {
        return Err(HeadError::EmptyDataset);
    }
    if x.len() != labels.len() {
        return Err(HeadError::Shape(format!("{} vectors for {} labels", x.len(), labels.len())));
    }
    let classes = classes.unwrap_or_else(|| class_list(labels));
    let mut m = HeadModel::new(cfg, classes, x[0].len())?;
    m.check_input(x)?;
    let ys: Vec<usize> = labels.iter().map(|&l| m.class_index(l)).collect::<Result<_>>()?;
    let val = match val {
        Some((vx, vl)) if !vx.is_empty() => {
            let vy: Vec<usize> = vl.iter().map(|&l| m.class_index(l)).collect::<Result<_>>()?;
            Some((vx, vy))
        }
        _ => None,
    };
    let mut adam = AdamState::new(&m.params);
    let mut trace = TrainTrace::default();
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..x.len()).collect();
        rng::shuffle(&mut order, &mut rng::derived(cfg.seed, epoch as u64 + 1));
        let mut losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| x[i].clone()).collect();
            let by: Vec<usize> = chunk.iter().map(|&i| ys[i]).collect();
            let seed = cfg.seed ^ (step + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let (loss, g) = m.loss_and_gradients(&bx, &by, true, seed)?;
            adam_step(&mut m.params, &g, &mut adam, cfg.learning_rate, &AdamConfig::default());
            losses.push(loss);
            step += 1;
        }
        let (_, train_accuracy) = evaluate(&m, x, &ys)?;
        let (val_loss, val_accuracy) = match &val {
            Some((vx, vy)) => {
                let (l, a) = evaluate(&m, vx, vy)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        trace.epochs.push(EpochStats {
            epoch: epoch + 1,
            train_loss: losses.iter().sum::<f64>() / losses.len() as f64,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
        log::info!("head epoch {}/{}: acc {:.4}", epoch + 1, cfg.epochs, train_accuracy);
    }
    Ok((m, trace))
}

pub fn head_train(b: &HiddenStateBatch, cfg: &HeadConfig) -> Result<(HeadModel, TrainTrace)> {
    let labels = b.labels.as_ref().ok_or(HeadError::MissingLabels)?;
    let x = global_average_pool(b, cfg.pool_include_padding);
    head_train_pooled(&x, labels, None, cfg, None)
}

pub fn head_predict_pooled(m: &HeadModel, x: &[Vec<f64>]) -> Result<(Vec<Label>, Vec<Vec<f64>>)> {
    let probs = m.probabilities(x)?;
    Ok((probs.iter().map(|p| m.classes[argmax(p)]).collect(), probs))
}

pub fn head_predict(m: &HeadModel, b: &HiddenStateBatch) -> Result<(Vec<Label>, Vec<Vec<f64>>)> {
    if b.h != m.input_dim {
        return Err(HeadError::Shape(format!("hidden width {}, head expects {}", b.h, m.input_dim)));
    }
    head_predict_pooled(m, &global_average_pool(b, m.config.pool_include_padding))
}

pub fn save_head(m: &HeadModel, path: &Path) -> Result<()> {
    let json = serde_json::to_string(m).map_err(parse_err)?;
    std::fs::write(path, json).map_err(|source| HeadError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_head(path: &Path) -> Result<HeadModel> {
    let s = std::fs::read_to_string(path).map_err(|source| HeadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&s).map_err(parse_err)
}
