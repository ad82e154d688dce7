//! Logistic-loss gradient boosting over regression trees.

use serde::{Deserialize, Serialize};

use super::tree::{Task, TreeModel, TreeParams};
use super::{ModelError, Predictor, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self { n_rounds: 50, learning_rate: 0.1, max_depth: 3, min_samples_leaf: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub trees: Vec<TreeModel>,
    pub learning_rate: f64,
    /// Initial log-odds.
    pub base_score: f64,
    pub n_rounds: usize,
    pub n_features: usize,
    /// Mean training log-loss before the first round and after every round.
    pub loss_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Log-loss of a 0/1 target at log-odds `z`, computed without overflow.
fn log_loss(y: f64, z: f64) -> f64 {
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    softplus - y * z
}

fn mean_loss(y: &[f64], z: &[f64]) -> f64 {
    y.iter().zip(z).map(|(&yi, &zi)| log_loss(yi, zi)).sum::<f64>() / y.len() as f64
}

impl EnsembleModel {
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    /// Fits `n_rounds` regression trees to the logistic-loss gradient. Leaf
    /// values are Newton steps, halved per leaf until that leaf's training
    /// loss does not increase, so the training loss never goes up.
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &BoostParams) -> Result<EnsembleModel> {
        if x.is_empty() {
            return Err(ModelError::EmptyMatrix);
        }
        if x.len() != y.len() {
            return Err(ModelError::Shape(format!("{} rows but {} targets", x.len(), y.len())));
        }
        let n_features = x[0].len();
        let n = y.len() as f64;
        let pos = y.iter().filter(|&&v| v > 0.5).count() as f64;

        if pos == 0.0 || pos == n {
            let p = (pos / n).clamp(1e-6, 1.0 - 1e-6);
            let base_score = (p / (1.0 - p)).ln();
            let reason = format!("single class in training data; constant probability {p}");
            tracing::warn!("{reason}");
            return Ok(EnsembleModel {
                trees: Vec::new(),
                learning_rate: params.learning_rate,
                base_score,
                n_rounds: 0,
                n_features,
                loss_trace: vec![mean_loss(y, &vec![base_score; y.len()])],
                fallback: Some(reason),
            });
        }

        let p0 = pos / n;
        let base_score = (p0 / (1.0 - p0)).ln();
        let mut score = vec![base_score; y.len()];
        let mut loss_trace = vec![mean_loss(y, &score)];
        let mut trees = Vec::with_capacity(params.n_rounds);
        let lr = params.learning_rate;
        let tree_params = TreeParams { max_depth: params.max_depth, min_samples_leaf: params.min_samples_leaf, task: Task::Regress };

        for _ in 0..params.n_rounds {
            let prob: Vec<f64> = score.iter().map(|&z| sigmoid(z)).collect();
            let residual: Vec<f64> = y.iter().zip(&prob).map(|(yi, pi)| yi - pi).collect();
            let mut tree = TreeModel::fit(x, &residual, &tree_params)?;

            let leaf_of: Vec<usize> = x.iter().map(|r| tree.leaf_index(r)).collect();
            let leaves: Vec<usize> = tree.leaf_boxes().into_iter().map(|(i, _)| i).collect();
            for leaf in leaves {
                let rows: Vec<usize> = (0..x.len()).filter(|&i| leaf_of[i] == leaf).collect();
                let g: f64 = rows.iter().map(|&i| residual[i]).sum();
                let h: f64 = rows.iter().map(|&i| prob[i] * (1.0 - prob[i])).sum();
                let mut v = if rows.is_empty() { 0.0 } else { g / h.max(1e-12) };
                let leaf_loss = |v: f64| rows.iter().map(|&i| log_loss(y[i], score[i] + lr * v)).sum::<f64>();
                let before = leaf_loss(0.0);
                let mut halvings = 0;
                while leaf_loss(v) > before && halvings < 60 {
                    v /= 2.0;
                    halvings += 1;
                }
                if leaf_loss(v) > before {
                    v = 0.0;
                }
                tree.set_leaf_output(leaf, v);
            }
            for (i, s) in score.iter_mut().enumerate() {
                *s += lr * tree.leaf_output(leaf_of[i]);
            }
            loss_trace.push(mean_loss(y, &score));
            trees.push(tree);
        }

        Ok(EnsembleModel {
            trees,
            learning_rate: lr,
            base_score,
            n_rounds: params.n_rounds,
            n_features,
            loss_trace,
            fallback: None,
        })
    }
}

impl Predictor for EnsembleModel {
    fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.raw_score(x))
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.trees.iter().flat_map(|t| t.used_features()).collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

pub fn train_boosted(matrix: &FeatureMatrix, params: &BoostParams) -> Result<EnsembleModel> {
    let y = matrix.targets().ok_or(ModelError::UnlabeledData)?;
    EnsembleModel::fit(&matrix.rows, &y, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 19.0]).collect();
        let y = x.iter().map(|r| if r[0] > 0.5 { 1.0 } else { 0.0 }).collect();
        (x, y)
    }

    #[test]
    fn separable_data_is_learned() {
        let (x, y) = line();
        let m = EnsembleModel::fit(&x, &y, &BoostParams { n_rounds: 10, learning_rate: 0.5, max_depth: 2, min_samples_leaf: 1 }).unwrap();
        for (r, t) in x.iter().zip(&y) {
            assert_eq!(m.predict(r) >= 0.5, *t > 0.5);
        }
    }

    #[test]
    fn zero_rate_or_rounds_is_constant() {
        let (x, y) = line();
        let base = y.iter().sum::<f64>() / y.len() as f64;
        for params in [
            BoostParams { learning_rate: 0.0, ..Default::default() },
            BoostParams { n_rounds: 0, ..Default::default() },
        ] {
            let m = EnsembleModel::fit(&x, &y, &params).unwrap();
            for r in &x {
                assert!((m.predict(r) - base).abs() < 1e-12);
                assert_eq!(m.predict(r), sigmoid(m.base_score));
            }
        }
    }

    #[test]
    fn loss_never_increases() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![((i * 37) % 60) as f64 / 60.0, ((i * 11) % 7) as f64]).collect();
        let y: Vec<f64> = (0..60).map(|i| ((i * 13) % 5 == 0) as u8 as f64).collect();
        let m = EnsembleModel::fit(&x, &y, &BoostParams { n_rounds: 40, learning_rate: 1.0, max_depth: 3, min_samples_leaf: 1 }).unwrap();
        assert_eq!(m.loss_trace.len(), 41);
        for w in m.loss_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn single_class_falls_back() {
        let x = vec![vec![0.0], vec![1.0]];
        let m = EnsembleModel::fit(&x, &[0.0, 0.0], &BoostParams::default()).unwrap();
        assert!(m.fallback.is_some());
        assert!(m.trees.is_empty());
        assert!(m.predict(&[0.5]) < 1e-5);
    }
}
