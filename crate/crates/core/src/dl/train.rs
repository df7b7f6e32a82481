//! Mini-batch training with Adam, per-epoch traces and prediction.

use serde::{Deserialize, Serialize};

use super::network::Network;
use super::tensor::{adam_step, argmax, AdamConfig, AdamState};
use super::{shape_err, DlError, Result};
use crate::corpus::Label;
use crate::preprocess::{TokenSequence, PAD_INDEX};
use crate::rng;

/// Token sequences with their labels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeqData {
    pub seqs: Vec<Vec<u32>>,
    pub labels: Vec<Label>,
}

impl SeqData {
    /// Cuts or right-pads every sequence to `seq_len`.
    pub fn from_sequences(seqs: &[TokenSequence], labels: &[Label], seq_len: usize) -> SeqData {
        SeqData {
            seqs: seqs.iter().map(|s| fit_length(&s.indices, seq_len)).collect(),
            labels: labels.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> SeqData {
        SeqData {
            seqs: idx.iter().map(|&i| self.seqs[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

pub fn fit_length(seq: &[u32], seq_len: usize) -> Vec<u32> {
    let mut v: Vec<u32> = seq.iter().take(seq_len).copied().collect();
    v.resize(seq_len, PAD_INDEX);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean of the training-mode batch losses.
    pub train_loss: f64,
    /// Evaluation-mode accuracy over the full training set.
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut s = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch,
                e.train_loss,
                e.train_accuracy,
                opt(e.val_loss),
                opt(e.val_accuracy)
            ));
        }
        s
    }
}

fn targets(net: &Network, labels: &[Label]) -> Result<Vec<usize>> {
    labels.iter().map(|&l| net.class_index(l)).collect()
}

/// Evaluation-mode mean cross-entropy and accuracy.
pub fn evaluate(net: &Network, data: &SeqData) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(DlError::EmptyDataset);
    }
    let ys = targets(net, &data.labels)?;
    let probs = net.probabilities(&data.seqs)?;
    let mut loss = 0.0;
    let mut hits = 0usize;
    for (p, &y) in probs.iter().zip(&ys) {
        loss -= p[y].max(f64::MIN_POSITIVE).ln();
        hits += usize::from(argmax(p) == y);
    }
    let n = ys.len() as f64;
    Ok((loss / n, hits as f64 / n))
}

fn step_seed(seed: u64, step: u64) -> u64 {
    seed ^ step.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains for `net.config.epochs` epochs over seeded shuffles of `train`.
pub fn train(mut net: Network, train: &SeqData, val: Option<&SeqData>) -> Result<(Network, TrainTrace)> {
    if train.is_empty() {
        return Err(DlError::EmptyDataset);
    }
    if train.seqs.len() != train.labels.len() {
        return shape_err("sequence and label counts differ");
    }
    let cfg = net.config.clone();
    let ys = targets(&net, &train.labels)?;
    let batch_size = cfg.batch_size.max(1);
    let mut adam = AdamState::new(net.params());
    let adam_cfg = AdamConfig::default();
    let mut trace = TrainTrace::default();
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        rng::shuffle(&mut order, &mut rng::derived(cfg.seed, epoch as u64 + 1));
        let mut losses = Vec::new();
        for chunk in order.chunks(batch_size) {
            let batch: Vec<Vec<u32>> = chunk.iter().map(|&i| train.seqs[i].clone()).collect();
            let by: Vec<usize> = chunk.iter().map(|&i| ys[i]).collect();
            let (loss, grads) = net.loss_and_gradients(&batch, &by, true, step_seed(cfg.seed, step))?;
            adam_step(net.params_mut(), &grads, &mut adam, cfg.learning_rate, &adam_cfg);
            losses.push(loss);
            step += 1;
        }
        let (_, train_accuracy) = evaluate(&net, train)?;
        let (val_loss, val_accuracy) = match val.filter(|v| !v.is_empty()) {
            Some(v) => {
                let (l, a) = evaluate(&net, v)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        let stats = EpochStats {
            epoch: epoch + 1,
            train_loss: losses.iter().sum::<f64>() / losses.len() as f64,
            train_accuracy,
            val_loss,
            val_accuracy,
        };
        log::info!(
            "{} epoch {}/{}: loss {:.4} acc {:.4}",
            cfg.arch.name(),
            stats.epoch,
            cfg.epochs,
            stats.train_loss,
            stats.train_accuracy
        );
        trace.epochs.push(stats);
    }
    Ok((net, trace))
}

/// Argmax labels with the lowest class index winning ties.
pub fn predict(net: &Network, seqs: &[Vec<u32>]) -> Result<(Vec<Label>, Vec<Vec<f64>>)> {
    let probs = net.probabilities(seqs)?;
    let labels = probs.iter().map(|p| net.classes[argmax(p)]).collect();
    Ok((labels, probs))
}
