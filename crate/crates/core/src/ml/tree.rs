//! CART-style classification tree with Gini impurity.
//!
//! Candidate thresholds are midpoints between consecutive distinct sorted
//! values. A node splits whenever some threshold separates its samples, even
//! if no split lowers impurity, so XOR-like data is still fit. Ties between
//! equally good splits go to the lowest feature and then the lowest threshold.

use serde::{Deserialize, Serialize};

use super::{check_dim, MlError, Result};
use crate::corpus::Label;
use crate::embedding::EncodedDataset;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DtConfig {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for DtConfig {
    fn default() -> Self {
        DtConfig {
            max_depth: Some(12),
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtNode {
    Leaf {
        class: Label,
        /// Training samples per class, indexed by `Label::index`.
        class_counts: [u64; 3],
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<DtNode>,
        right: Box<DtNode>,
    },
}

impl DtNode {
    pub fn leaf(class: Label) -> DtNode {
        let mut class_counts = [0; 3];
        class_counts[class.index()] = 1;
        DtNode::Leaf { class, class_counts }
    }

    /// Longest root-to-leaf path, counted in edges.
    pub fn depth(&self) -> usize {
        match self {
            DtNode::Leaf { .. } => 0,
            DtNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            DtNode::Leaf { .. } => 1,
            DtNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    fn route(&self, x: &[f64]) -> &DtNode {
        let mut node = self;
        while let DtNode::Split {
            feature,
            threshold,
            left,
            right,
        } = node
        {
            node = if x[*feature] <= *threshold { left } else { right };
        }
        node
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub dim: usize,
    pub config: DtConfig,
    pub root: DtNode,
}

impl DecisionTree {
    pub fn leaf_distribution(&self, x: &[f64]) -> Result<[f64; 3]> {
        check_dim(self.dim, x.len())?;
        match self.root.route(x) {
            DtNode::Leaf { class_counts, .. } => {
                let n: u64 = class_counts.iter().sum();
                Ok(class_counts.map(|c| c as f64 / n.max(1) as f64))
            }
            DtNode::Split { .. } => unreachable!("routing ends at a leaf"),
        }
    }
}

pub fn gini(counts: &[u64; 3]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Size-weighted Gini of a binary partition.
pub fn split_gini(left: &[u64; 3], right: &[u64; 3]) -> f64 {
    let nl: u64 = left.iter().sum();
    let nr: u64 = right.iter().sum();
    let n = (nl + nr) as f64;
    (nl as f64 * gini(left) + nr as f64 * gini(right)) / n
}

fn majority(counts: &[u64; 3]) -> Label {
    let best = (0..3).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
    Label::ALL[best]
}

/// Threshold strictly below `hi` and at least `lo`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

pub(crate) struct Grower<'a> {
    pub xs: &'a [&'a [f64]],
    pub ys: &'a [Label],
    pub dim: usize,
    pub cfg: DtConfig,
    /// Random feature subsets of the given size, drawn per node.
    pub sampler: Option<(&'a mut Rng, usize)>,
}

impl Grower<'_> {
    pub fn grow(&mut self, idx: &mut [usize], depth: usize) -> DtNode {
        let mut counts = [0u64; 3];
        for &i in idx.iter() {
            counts[self.ys[i].index()] += 1;
        }
        let leaf = DtNode::Leaf {
            class: majority(&counts),
            class_counts: counts,
        };
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let too_deep = self.cfg.max_depth.is_some_and(|d| depth >= d);
        if pure || too_deep || idx.len() < self.cfg.min_samples_split.max(2) {
            return leaf;
        }
        let features = self.candidate_features();
        let Some((feature, threshold)) = self.best_split(idx, &features) else {
            return leaf;
        };
        // Stable partition keeps child sample order deterministic.
        let (mut l, mut r): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.xs[i][feature] <= threshold);
        DtNode::Split {
            feature,
            threshold,
            left: Box::new(self.grow(&mut l, depth + 1)),
            right: Box::new(self.grow(&mut r, depth + 1)),
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        match &mut self.sampler {
            None => (0..self.dim).collect(),
            Some((rng, k)) => {
                let mut all: Vec<usize> = (0..self.dim).collect();
                let k = (*k).clamp(1, self.dim);
                for i in 0..k {
                    let j = i + rng::below(rng, self.dim - i);
                    all.swap(i, j);
                }
                all.truncate(k);
                all.sort_unstable();
                all
            }
        }
    }

    fn best_split(&self, idx: &mut [usize], features: &[usize]) -> Option<(usize, f64)> {
        let mut total = [0u64; 3];
        for &i in idx.iter() {
            total[self.ys[i].index()] += 1;
        }
        let mut best: Option<(f64, usize, f64)> = None;
        for &f in features {
            idx.sort_by(|&a, &b| self.xs[a][f].total_cmp(&self.xs[b][f]).then(a.cmp(&b)));
            let mut left = [0u64; 3];
            for p in 1..idx.len() {
                left[self.ys[idx[p - 1]].index()] += 1;
                let lo = self.xs[idx[p - 1]][f];
                let hi = self.xs[idx[p]][f];
                if lo >= hi {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1], total[2] - left[2]];
                let score = split_gini(&left, &right);
                if best.is_none_or(|(s, _, _)| score < s) {
                    best = Some((score, f, midpoint(lo, hi)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

pub fn dt_train(data: &EncodedDataset, cfg: &DtConfig) -> Result<DecisionTree> {
    if data.is_empty() {
        return Err(MlError::EmptyDataset);
    }
    let xs = data.features();
    for x in &xs {
        check_dim(data.dim, x.len())?;
    }
    let ys = data.labels();
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    let mut g = Grower {
        xs: &xs,
        ys: &ys,
        dim: data.dim,
        cfg: *cfg,
        sampler: None,
    };
    let root = g.grow(&mut idx, 0);
    Ok(DecisionTree {
        dim: data.dim,
        config: *cfg,
        root,
    })
}

/// Goes left when `x[feature] <= threshold`.
pub fn dt_predict(t: &DecisionTree, x: &[f64]) -> Result<Label> {
    check_dim(t.dim, x.len())?;
    match t.root.route(x) {
        DtNode::Leaf { class, .. } => Ok(*class),
        DtNode::Split { .. } => unreachable!("routing ends at a leaf"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Language;
    use crate::embedding::EncodedRecord;
    use proptest::prelude::*;
    use Label::*;

    fn dataset(points: Vec<(Vec<f64>, Label)>) -> EncodedDataset {
        EncodedDataset {
            dim: points[0].0.len(),
            records: points
                .into_iter()
                .enumerate()
                .map(|(i, (vector, label))| EncodedRecord {
                    id: i.to_string(),
                    vector,
                    label,
                    lang: Language::Russian,
                    empty_pool: false,
                })
                .collect(),
        }
    }

    fn xor() -> EncodedDataset {
        dataset(vec![
            (vec![0.0, 0.0], Threat),
            (vec![1.0, 1.0], Threat),
            (vec![0.0, 1.0], NonThreat),
            (vec![1.0, 0.0], NonThreat),
        ])
    }

    #[test]
    fn pure_and_single_sample_data_are_leaves() {
        let t = dt_train(&dataset(vec![(vec![1.0], Neutral), (vec![5.0], Neutral)]), &DtConfig::default()).unwrap();
        assert!(matches!(t.root, DtNode::Leaf { class: Neutral, .. }));
        let t = dt_train(&dataset(vec![(vec![3.0, 4.0], NonThreat)]), &DtConfig::default()).unwrap();
        assert_eq!(t.root.depth(), 0);
        assert_eq!(dt_predict(&t, &[-9.0, 9.0]).unwrap(), NonThreat);
        let empty = EncodedDataset { dim: 2, records: vec![] };
        assert!(matches!(dt_train(&empty, &DtConfig::default()), Err(MlError::EmptyDataset)));
    }

    /// Lowest weighted Gini over every feature and midpoint, first wins ties.
    fn brute_force_root(data: &EncodedDataset) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..data.dim {
            let mut vals: Vec<f64> = data.records.iter().map(|r| r.vector[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let (mut l, mut r) = ([0u64; 3], [0u64; 3]);
                for rec in &data.records {
                    let side = if rec.vector[f] <= t { &mut l } else { &mut r };
                    side[rec.label.index()] += 1;
                }
                let g = split_gini(&l, &r);
                if best.is_none_or(|b| g < b.2) {
                    best = Some((f, t, g));
                }
            }
        }
        best
    }

    #[test]
    fn xor_is_learned_exactly() {
        let data = xor();
        let t = dt_train(&data, &DtConfig { max_depth: Some(2), ..DtConfig::default() }).unwrap();
        for r in &data.records {
            assert_eq!(dt_predict(&t, &r.vector).unwrap(), r.label);
        }
        let (f, thr, _) = brute_force_root(&data).unwrap();
        match &t.root {
            DtNode::Split { feature, threshold, .. } => {
                assert_eq!((*feature, *threshold), (f, thr));
            }
            DtNode::Leaf { .. } => panic!("xor root must split"),
        }
    }

    #[test]
    fn routing_follows_the_threshold() {
        let t = DecisionTree {
            dim: 2,
            config: DtConfig::default(),
            root: DtNode::Split {
                feature: 0,
                threshold: 0.5,
                left: Box::new(DtNode::leaf(Threat)),
                right: Box::new(DtNode::leaf(NonThreat)),
            },
        };
        assert_eq!(dt_predict(&t, &[0.4, 7.0]).unwrap(), Threat);
        assert_eq!(dt_predict(&t, &[0.5, 7.0]).unwrap(), Threat);
        assert_eq!(dt_predict(&t, &[0.6, 7.0]).unwrap(), NonThreat);
        assert!(matches!(dt_predict(&t, &[0.1]), Err(MlError::DimensionMismatch { .. })));
        let leaf = DecisionTree { dim: 1, config: DtConfig::default(), root: DtNode::leaf(Neutral) };
        assert_eq!(dt_predict(&leaf, &[123.0]).unwrap(), Neutral);
    }

    #[test]
    fn depth_limit_and_majority_leaves() {
        let pts: Vec<(Vec<f64>, Label)> = (0..40)
            .map(|i| (vec![i as f64, (i * 7 % 11) as f64], Label::ALL[(i * 5 % 7) % 3]))
            .collect();
        let data = dataset(pts);
        for d in 0..5 {
            let t = dt_train(&data, &DtConfig { max_depth: Some(d), ..DtConfig::default() }).unwrap();
            assert!(t.root.depth() <= d);
        }
        let t = dt_train(&data, &DtConfig { max_depth: Some(0), ..DtConfig::default() }).unwrap();
        let DtNode::Leaf { class, class_counts } = t.root else { panic!() };
        assert_eq!(class_counts.iter().sum::<u64>(), 40);
        assert_eq!(class, majority(&class_counts));
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[4, 0, 0]), 0.0);
        assert!((gini(&[1, 1, 0]) - 0.5).abs() < 1e-15);
        assert!((gini(&[1, 1, 1]) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn adjacent_floats_split_cleanly() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let data = dataset(vec![(vec![a], Threat), (vec![b], NonThreat)]);
        let t = dt_train(&data, &DtConfig::default()).unwrap();
        assert_eq!(dt_predict(&t, &[a]).unwrap(), Threat);
        assert_eq!(dt_predict(&t, &[b]).unwrap(), NonThreat);
    }

    proptest! {
        #[test]
        fn unbounded_tree_fits_consistent_data(
            pts in proptest::collection::btree_map((0i32..20, 0i32..20), 0usize..3, 1..40)
        ) {
            let data = dataset(
                pts.into_iter()
                    .map(|((a, b), c)| (vec![a as f64 * 0.37, b as f64 * -1.1], Label::ALL[c]))
                    .collect(),
            );
            let t = dt_train(&data, &DtConfig { max_depth: None, min_samples_split: 2 }).unwrap();
            for r in &data.records {
                prop_assert_eq!(dt_predict(&t, &r.vector).unwrap(), r.label);
            }
        }
    }
}
