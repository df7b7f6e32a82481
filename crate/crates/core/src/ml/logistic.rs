//! One-vs-rest logistic regression trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::{check_dim, class_list, MlError, Result};
use crate::corpus::Label;
use crate::embedding::EncodedDataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrConfig {
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Stop once the gradient's largest absolute entry falls below this.
    pub tolerance: f64,
    pub standardize: bool,
}

impl Default for LrConfig {
    fn default() -> Self {
        LrConfig {
            learning_rate: 0.1,
            max_iterations: 1000,
            tolerance: 1e-6,
            standardize: true,
        }
    }
}

/// Per-feature standardization fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(xs: &[&[f64]], dim: usize) -> Scaler {
        let n = xs.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for x in xs {
            for (m, v) in mean.iter_mut().zip(*x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for x in xs {
            for j in 0..dim {
                var[j] += (x[j] - mean[j]).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Scaler { mean, std }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean binary log-loss of a sigmoid unit and its gradient in `(w, b)`.
pub fn binary_loss_and_grad(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64]) -> (f64, Vec<f64>, f64) {
    let n = xs.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = dot(w, x) + b;
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, v) in gw.iter_mut().zip(x) {
            *g += r * v;
        }
        gb += r;
    }
    gw.iter_mut().for_each(|g| *g /= n);
    (loss / n, gw, gb / n)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub classes: Vec<Label>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub scaler: Option<Scaler>,
    pub config: LrConfig,
    /// Iterations actually run per class.
    pub iterations: Vec<usize>,
}

impl LrModel {
    /// An untrained model with all-zero parameters.
    pub fn zeros(classes: Vec<Label>, dim: usize, config: LrConfig) -> LrModel {
        let c = classes.len();
        LrModel {
            classes,
            weights: vec![vec![0.0; dim]; c],
            biases: vec![0.0; c],
            scaler: None,
            config,
            iterations: vec![0; c],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// Per-class sigmoid scores, in `classes` order.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let x = match &self.scaler {
            Some(s) => s.transform(x),
            None => x.to_vec(),
        };
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| sigmoid(dot(w, &x) + b))
            .collect())
    }
}

pub fn lr_train(data: &EncodedDataset, cfg: &LrConfig) -> Result<LrModel> {
    if data.is_empty() {
        return Err(MlError::EmptyDataset);
    }
    let classes = class_list(data);
    if classes.len() < 2 {
        return Err(MlError::SingleClassData);
    }
    let raw = data.features();
    for x in &raw {
        check_dim(data.dim, x.len())?;
    }
    let scaler = cfg.standardize.then(|| Scaler::fit(&raw, data.dim));
    let xs: Vec<Vec<f64>> = raw
        .iter()
        .map(|x| match &scaler {
            Some(s) => s.transform(x),
            None => x.to_vec(),
        })
        .collect();

    let mut model = LrModel::zeros(classes.clone(), data.dim, *cfg);
    model.scaler = scaler;
    for (c, &class) in classes.iter().enumerate() {
        let ys: Vec<f64> = data
            .records
            .iter()
            .map(|r| if r.label == class { 1.0 } else { 0.0 })
            .collect();
        let (w, b) = (&mut model.weights[c], &mut model.biases[c]);
        let mut iters = 0;
        while iters < cfg.max_iterations {
            let (_, gw, gb) = binary_loss_and_grad(w, *b, &xs, &ys);
            let norm = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
            if norm < cfg.tolerance {
                break;
            }
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= cfg.learning_rate * g;
            }
            *b -= cfg.learning_rate * gb;
            iters += 1;
        }
        model.iterations[c] = iters;
    }
    Ok(model)
}

/// Highest sigmoid score wins; ties go to the earliest class.
pub fn lr_predict(m: &LrModel, x: &[f64]) -> Result<(Label, Vec<f64>)> {
    let scores = m.scores(x)?;
    let best = super::argmax(&scores);
    Ok((m.classes[best], scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Language;
    use crate::embedding::EncodedRecord;
    use crate::rng;

    pub(crate) fn dataset(points: Vec<(Vec<f64>, Label)>) -> EncodedDataset {
        EncodedDataset {
            dim: points[0].0.len(),
            records: points
                .into_iter()
                .enumerate()
                .map(|(i, (vector, label))| EncodedRecord {
                    id: i.to_string(),
                    vector,
                    label,
                    lang: Language::English,
                    empty_pool: false,
                })
                .collect(),
        }
    }

    /// Points on either side of `x0 + x1 = 0` with margin at least 1.
    fn separable(n: usize, seed: u64) -> EncodedDataset {
        let mut r = rng::seeded(seed);
        let mut pts = Vec::new();
        while pts.len() < n {
            let x = vec![rng::uniform(&mut r, -4.0, 4.0), rng::uniform(&mut r, -4.0, 4.0)];
            let s = (x[0] + x[1]) / 2f64.sqrt();
            if s.abs() >= 1.0 {
                pts.push((x, if s > 0.0 { Label::NonThreat } else { Label::Threat }));
            }
        }
        dataset(pts)
    }

    #[test]
    fn separable_data_is_fit_perfectly() {
        let data = separable(100, 4);
        let m = lr_train(&data, &LrConfig::default()).unwrap();
        assert!(m.iterations.iter().all(|&i| i <= 1000));
        for r in &data.records {
            assert_eq!(lr_predict(&m, &r.vector).unwrap().0, r.label);
        }
    }

    #[test]
    fn zero_model_scores_one_half() {
        let m = LrModel::zeros(Label::ALL.to_vec(), 3, LrConfig::default());
        let (label, scores) = lr_predict(&m, &[4.0, -1.0, 9.0]).unwrap();
        assert_eq!(scores, vec![0.5; 3]);
        assert_eq!(label, Label::Threat);
    }

    #[test]
    fn hand_set_weights() {
        let mut m = LrModel::zeros(vec![Label::Threat], 2, LrConfig::default());
        m.weights[0] = vec![1.0, 0.0];
        assert_eq!(m.scores(&[0.0, 0.0]).unwrap()[0], 0.5);
        let big = m.scores(&[40.0, 0.0]).unwrap()[0];
        assert!(big > 0.999_999);
        assert!(matches!(m.scores(&[1.0]), Err(MlError::DimensionMismatch { .. })));

        let mut m = LrModel::zeros(Label::ALL.to_vec(), 2, LrConfig::default());
        m.weights = vec![vec![1.0, -1.0], vec![0.5, 0.5], vec![-1.0, 2.0]];
        m.biases = vec![0.0, 0.1, -0.2];
        let x = [0.3, 0.9];
        let expected: Vec<f64> = [(-0.6f64), 0.7, 1.3].iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect();
        let (label, scores) = lr_predict(&m, &x).unwrap();
        for (a, b) in scores.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(label, Label::NonThreat);
    }

    #[test]
    fn three_classes_give_three_weight_vectors() {
        let mut pts = Vec::new();
        for i in 0..30 {
            let t = i as f64 * 0.1;
            pts.push((vec![5.0 + t, 0.0], Label::Threat));
            pts.push((vec![0.0, 5.0 + t], Label::Neutral));
            pts.push((vec![-5.0 - t, -5.0], Label::NonThreat));
        }
        let data = dataset(pts);
        let m = lr_train(&data, &LrConfig::default()).unwrap();
        assert_eq!(m.weights.len(), 3);
        for r in &data.records {
            let scores = m.scores(&r.vector).unwrap();
            let (label, _) = lr_predict(&m, &r.vector).unwrap();
            let best = (0..3).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
            assert_eq!(label, m.classes[best]);
            assert_eq!(label, r.label);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let data = dataset(vec![(vec![1.0], Label::Threat), (vec![2.0], Label::Threat)]);
        assert!(matches!(lr_train(&data, &LrConfig::default()), Err(MlError::SingleClassData)));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut r = rng::seeded(11);
        for _ in 0..20 {
            let dim = 1 + rng::below(&mut r, 5);
            let n = 2 + rng::below(&mut r, 8);
            let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng::uniform(&mut r, -2.0, 2.0)).collect()).collect();
            let ys: Vec<f64> = (0..n).map(|_| (rng::below(&mut r, 2)) as f64).collect();
            let w: Vec<f64> = (0..dim).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect();
            let b = rng::uniform(&mut r, -1.0, 1.0);
            let (_, gw, gb) = binary_loss_and_grad(&w, b, &xs, &ys);
            let h = 1e-6;
            for j in 0..=dim {
                let shift = |delta: f64| {
                    let mut w2 = w.clone();
                    let mut b2 = b;
                    if j < dim { w2[j] += delta } else { b2 += delta }
                    binary_loss_and_grad(&w2, b2, &xs, &ys).0
                };
                let fd = (shift(h) - shift(-h)) / (2.0 * h);
                let an = if j < dim { gw[j] } else { gb };
                let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-8);
                assert!(rel < 1e-6, "rel err {rel}");
            }
        }
    }

    #[test]
    fn loss_never_increases_at_small_step() {
        let data = separable(60, 9);
        let xs: Vec<Vec<f64>> = data.records.iter().map(|r| r.vector.clone()).collect();
        let ys: Vec<f64> = data.records.iter().map(|r| (r.label == Label::Threat) as u8 as f64).collect();
        let mut w = vec![0.0; 2];
        let mut b = 0.0;
        let mut prev = f64::INFINITY;
        for _ in 0..300 {
            let (loss, gw, gb) = binary_loss_and_grad(&w, b, &xs, &ys);
            assert!(loss <= prev + 1e-15);
            prev = loss;
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= 0.01 * g;
            }
            b -= 0.01 * gb;
        }
    }
}
