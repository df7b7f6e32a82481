//! Bagged ensemble of Gini trees with per-node random feature subsets.
//!
//! Tree `m` (counting from 1) draws its bootstrap sample and feature subsets
//! from a generator seeded with `seed + m`, so trees train in parallel and
//! still match a sequential run.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DtConfig, DtNode, Grower};
use super::{check_dim, vote_mode, MlError, Result};
use crate::corpus::Label;
use crate::embedding::EncodedDataset;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfConfig {
    pub n_trees: usize,
    /// Share of features tried at each node; `None` means `sqrt(d) / d`.
    pub feature_fraction: Option<f64>,
    pub tree: DtConfig,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            n_trees: 100,
            feature_fraction: None,
            tree: DtConfig::default(),
            seed: 0,
        }
    }
}

impl RfConfig {
    pub fn features_per_node(&self, dim: usize) -> usize {
        let frac = self
            .feature_fraction
            .unwrap_or_else(|| (dim as f64).sqrt() / dim as f64);
        ((frac * dim as f64 - 1e-9).ceil() as usize).clamp(1, dim.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub dim: usize,
    pub config: RfConfig,
    pub trees: Vec<DtNode>,
    /// Accuracy of each training sample judged only by trees that did not
    /// see it; `None` when no sample was ever left out.
    pub oob_accuracy: Option<f64>,
}

impl RandomForest {
    pub fn votes(&self, x: &[f64]) -> Result<Vec<Label>> {
        check_dim(self.dim, x.len())?;
        Ok(self.trees.iter().map(|t| leaf_class(t, x)).collect())
    }

    pub fn vote_fractions(&self, x: &[f64]) -> Result<[f64; 3]> {
        let votes = self.votes(x)?;
        let mut p = [0.0; 3];
        for v in &votes {
            p[v.index()] += 1.0;
        }
        Ok(p.map(|c| c / votes.len().max(1) as f64))
    }
}

fn leaf_class(mut node: &DtNode, x: &[f64]) -> Label {
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

pub fn rf_train(data: &EncodedDataset, cfg: &RfConfig) -> Result<RandomForest> {
    if data.is_empty() {
        return Err(MlError::EmptyDataset);
    }
    let xs = data.features();
    for x in &xs {
        check_dim(data.dim, x.len())?;
    }
    let ys = data.labels();
    let n = xs.len();
    let k = cfg.features_per_node(data.dim);

    let grown: Vec<(DtNode, Vec<bool>)> = (1..=cfg.n_trees.max(1) as u64)
        .into_par_iter()
        .map(|m| {
            let mut r = rng::seeded(cfg.seed.wrapping_add(m));
            let mut idx: Vec<usize> = (0..n).map(|_| rng::below(&mut r, n)).collect();
            let mut in_bag = vec![false; n];
            for &i in &idx {
                in_bag[i] = true;
            }
            let mut g = Grower {
                xs: &xs,
                ys: &ys,
                dim: data.dim,
                cfg: cfg.tree,
                sampler: Some((&mut r, k)),
            };
            (g.grow(&mut idx, 0), in_bag)
        })
        .collect();

    let mut correct = 0usize;
    let mut judged = 0usize;
    for i in 0..n {
        let votes: Vec<Label> = grown
            .iter()
            .filter(|(_, bag)| !bag[i])
            .map(|(t, _)| leaf_class(t, xs[i]))
            .collect();
        if let Some(v) = vote_mode(&votes) {
            judged += 1;
            correct += usize::from(v == ys[i]);
        }
    }
    Ok(RandomForest {
        dim: data.dim,
        config: *cfg,
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        oob_accuracy: (judged > 0).then(|| correct as f64 / judged as f64),
    })
}

/// Majority vote; ties go to the lowest class index.
pub fn rf_predict(f: &RandomForest, x: &[f64]) -> Result<Label> {
    let votes = f.votes(x)?;
    vote_mode(&votes).ok_or(MlError::InvalidModel("forest has no trees".into()))
}
