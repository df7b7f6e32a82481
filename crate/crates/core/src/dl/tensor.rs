//! Named parameter tensors and the few dense kernels the networks need.
//! Matrices are row-major.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor {
            name: name.into(),
            shape,
            data: vec![0.0; n],
        }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))` for a `[fan_in, fan_out]` matrix.
    pub fn glorot(name: impl Into<String>, rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        Tensor {
            name: name.into(),
            shape: vec![rows, cols],
            data: (0..rows * cols).map(|_| rng::uniform(rng, -limit, limit)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Gradients matching a parameter list. The tensor at `sparse_index`, when
/// set, collects gradients row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub dense: Vec<Vec<f64>>,
    pub rows: BTreeMap<u32, Vec<f64>>,
    pub sparse_index: Option<usize>,
    pub row_width: usize,
}

impl Gradients {
    pub fn zeros_like(params: &[Tensor], sparse_index: Option<usize>) -> Gradients {
        let dense = params
            .iter()
            .enumerate()
            .map(|(i, t)| if Some(i) == sparse_index { Vec::new() } else { vec![0.0; t.len()] })
            .collect();
        let row_width = sparse_index.map_or(0, |i| params[i].shape.get(1).copied().unwrap_or(0));
        Gradients {
            dense,
            rows: BTreeMap::new(),
            sparse_index,
            row_width,
        }
    }

    pub fn row_mut(&mut self, row: u32) -> &mut [f64] {
        let w = self.row_width;
        self.rows.entry(row).or_insert_with(|| vec![0.0; w])
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.dense.iter_mut().zip(&other.dense) {
            add(a, b);
        }
        for (r, g) in &other.rows {
            add(self.row_mut(*r), g);
        }
    }

    /// Full gradient of tensor `i`, expanding row-wise storage.
    pub fn tensor(&self, i: usize, params: &[Tensor]) -> Vec<f64> {
        if Some(i) != self.sparse_index {
            return self.dense[i].clone();
        }
        let mut full = vec![0.0; params[i].len()];
        for (r, g) in &self.rows {
            let s = *r as usize * self.row_width;
            full[s..s + self.row_width].copy_from_slice(g);
        }
        full
    }

    pub fn norm(&self) -> f64 {
        self.dense
            .iter()
            .flatten()
            .chain(self.rows.values().flatten())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> AdamState {
        AdamState {
            m: params.iter().map(|t| vec![0.0; t.len()]).collect(),
            v: params.iter().map(|t| vec![0.0; t.len()]).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of every tensor.
pub fn adam_step(params: &mut [Tensor], grads: &Gradients, state: &mut AdamState, lr: f64, cfg: &AdamConfig) {
    state.t += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let c2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let n_rows = p.len() / grads.row_width.max(1);
        let mut update = |k: usize, g: f64| {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
            let mh = m[k] / c1;
            let vh = v[k] / c2;
            p.data[k] -= lr * mh / (vh.sqrt() + cfg.epsilon);
        };
        if Some(i) == grads.sparse_index {
            let w = grads.row_width;
            for r in 0..n_rows {
                let g = grads.rows.get(&(r as u32));
                for j in 0..w {
                    update(r * w + j, g.map_or(0.0, |g| g[j]));
                }
            }
        } else {
            for (k, &g) in grads.dense[i].iter().enumerate() {
                update(k, g);
            }
        }
    }
}

pub fn add(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// `out += v · M[:, c0..c0 + out.len()]` for `M` with `cols` columns.
pub fn vec_mat(out: &mut [f64], v: &[f64], m: &[f64], cols: usize, c0: usize) {
    let w = out.len();
    for (k, &vk) in v.iter().enumerate() {
        if vk == 0.0 {
            continue;
        }
        let row = &m[k * cols + c0..k * cols + c0 + w];
        for (o, r) in out.iter_mut().zip(row) {
            *o += vk * r;
        }
    }
}

/// `out += M[:, c0..c0 + d.len()] · d`, the transpose product.
pub fn mat_vec_t(out: &mut [f64], d: &[f64], m: &[f64], cols: usize, c0: usize) {
    let w = d.len();
    for (k, o) in out.iter_mut().enumerate() {
        let row = &m[k * cols + c0..k * cols + c0 + w];
        *o += row.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `G[:, c0..c0 + d.len()] += vᵀ d`.
pub fn outer_add(g: &mut [f64], v: &[f64], d: &[f64], cols: usize, c0: usize) {
    let w = d.len();
    for (k, &vk) in v.iter().enumerate() {
        if vk == 0.0 {
            continue;
        }
        let row = &mut g[k * cols + c0..k * cols + c0 + w];
        for (r, dj) in row.iter_mut().zip(d) {
            *r += vk * dj;
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax and log-sum-exp of a logit row.
pub fn softmax(logits: &[f64]) -> (Vec<f64>, f64) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (exps.iter().map(|e| e / sum).collect(), max + sum.ln())
}

/// Index of the largest value; the earliest wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
