//! Skip-gram with negative sampling, single-threaded and seeded.
//!
//! For each center word and each context word inside a window of random
//! width `1..=window`, the center's input vector is pulled toward the
//! context's output vector and pushed away from `negatives` words drawn from
//! the unigram distribution raised to 0.75. The learning rate decays linearly
//! over all training tokens down to `1e-4` of its start value.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingSource, EmbeddingTable, Result};
use crate::corpus::Language;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_count: usize,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: super::DEFAULT_DIM,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_count: 1,
            seed: 1,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn train_skipgram<S: AsRef<str>>(
    corpus: &[Vec<S>],
    lang: Language,
    cfg: &SkipGramConfig,
) -> Result<EmbeddingTable> {
    if cfg.dim < 2 {
        return Err(EmbeddingError::InvalidDim {
            min: 2,
            found: cfg.dim,
        });
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in corpus {
        for w in s {
            *counts.entry(w.as_ref()).or_insert(0) += 1;
        }
    }
    let mut vocab: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= cfg.min_count.max(1))
        .collect();
    if vocab.is_empty() {
        return Err(EmbeddingError::EmptyCorpus);
    }
    vocab.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, (w, _))| (*w, i)).collect();

    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.iter().filter_map(|w| index.get(w.as_ref()).copied()).collect())
        .collect();

    let mut cumulative = Vec::with_capacity(vocab.len());
    let mut acc = 0.0;
    for &(_, c) in &vocab {
        acc += (c as f64).powf(0.75);
        cumulative.push(acc);
    }
    let total_weight = acc;

    let dim = cfg.dim;
    let n = vocab.len();
    let mut rng = rng::seeded(cfg.seed);
    let mut input: Vec<f64> = (0..n * dim)
        .map(|_| rng::uniform(&mut rng, -0.5, 0.5) / dim as f64)
        .collect();
    let mut output = vec![0.0f64; n * dim];
    let mut grad = vec![0.0f64; dim];

    let tokens_per_epoch: usize = sentences.iter().map(Vec::len).sum();
    let total_steps = (tokens_per_epoch * cfg.epochs).max(1) as f64;
    let mut step = 0usize;

    for _ in 0..cfg.epochs {
        for sent in &sentences {
            for (i, &center) in sent.iter().enumerate() {
                let lr = cfg.learning_rate * (1.0 - step as f64 / total_steps).max(1e-4);
                step += 1;
                let reach = match cfg.window {
                    0 => 0,
                    w => w - rng::below(&mut rng, w),
                };
                let lo = i.saturating_sub(reach);
                let hi = (i + reach).min(sent.len() - 1);
                for (j, &context) in sent.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let c_in = center * dim..(center + 1) * dim;
                    for d in 0..=cfg.negatives {
                        let (target, label) = if d == 0 {
                            (context, 1.0)
                        } else {
                            let u = rng::unit_f64(&mut rng) * total_weight;
                            let t = cumulative.partition_point(|&c| c <= u).min(n - 1);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let t_out = target * dim..(target + 1) * dim;
                        let dot: f64 = input[c_in.clone()]
                            .iter()
                            .zip(&output[t_out.clone()])
                            .map(|(a, b)| a * b)
                            .sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for k in 0..dim {
                            grad[k] += g * output[t_out.start + k];
                            output[t_out.start + k] += g * input[c_in.start + k];
                        }
                    }
                    for k in 0..dim {
                        input[c_in.start + k] += grad[k];
                    }
                }
            }
        }
    }

    let mut table = EmbeddingTable::new(dim, lang, EmbeddingSource::TrainedSkipgram);
    for (i, (w, _)) in vocab.iter().enumerate() {
        let v: Vec<f32> = input[i * dim..(i + 1) * dim].iter().map(|&x| x as f32).collect();
        table.insert(w.to_string(), &v)?;
    }
    Ok(table)
}
