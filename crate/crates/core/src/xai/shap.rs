//! Exact interventional Shapley values by subset enumeration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Result, XaiError};
use crate::models::Predictor;

/// Largest player set enumerated exactly.
pub const MAX_SHAP_FEATURES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapAttribution {
    /// Mean model output over the background rows.
    pub base_value: f64,
    /// Contribution per feature; features the model never reads are 0.
    pub phi: BTreeMap<String, f64>,
    /// Model output at the explained instance.
    pub output: f64,
    pub instance: Vec<f64>,
    pub background_size: usize,
}

impl ShapAttribution {
    /// Features ordered by |phi| descending, ties by name.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self.phi.iter().map(|(k, &p)| (k.as_str(), p)).collect();
        v.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(b.0)));
        v
    }

    pub fn local_accuracy_gap(&self) -> f64 {
        (self.base_value + self.phi.values().sum::<f64>() - self.output).abs()
    }
}

/// `phi_i = sum over S not containing i of |S|!(m-|S|-1)!/m! (v(S+i) - v(S))`
/// where `v(S)` averages the model over background rows with the features in
/// `S` fixed to `x`. Players are the features the model uses; every `v(S)` is
/// computed once.
pub fn shap_explain(model: &dyn Predictor, feature_names: &[String], x: &[f64], background: &[Vec<f64>]) -> Result<ShapAttribution> {
    if background.is_empty() {
        return Err(XaiError::EmptyBackground);
    }
    let n = model.n_features();
    if x.len() != n || feature_names.len() != n || background.iter().any(|r| r.len() != n) {
        return Err(XaiError::Shape(format!("model expects {n} features")));
    }
    let players = model.used_features();
    let m = players.len();
    if m > MAX_SHAP_FEATURES {
        return Err(XaiError::TooManyFeatures { used: m, max: MAX_SHAP_FEATURES });
    }

    let n_subsets = 1usize << m;
    let mut z = vec![0.0; n];
    let mut value = vec![0.0; n_subsets];
    for (mask, v) in value.iter_mut().enumerate() {
        let mut total = 0.0;
        for b in background {
            z.copy_from_slice(b);
            for (k, &j) in players.iter().enumerate() {
                if mask & (1 << k) != 0 {
                    z[j] = x[j];
                }
            }
            total += model.predict(&z);
        }
        *v = total / background.len() as f64;
    }

    // weight for a coalition of size s not containing the player: 1 / (m * C(m-1, s))
    let weights: Vec<f64> = (0..m)
        .map(|s| {
            let mut c = 1.0;
            for t in 0..s {
                c = c * (m - 1 - t) as f64 / (t + 1) as f64;
            }
            1.0 / (m as f64 * c)
        })
        .collect();

    let mut phi: BTreeMap<String, f64> = feature_names.iter().map(|f| (f.clone(), 0.0)).collect();
    for (k, &j) in players.iter().enumerate() {
        let bit = 1usize << k;
        let mut acc = 0.0;
        for mask in 0..n_subsets {
            if mask & bit == 0 {
                acc += weights[mask.count_ones() as usize] * (value[mask | bit] - value[mask]);
            }
        }
        phi.insert(feature_names[j].clone(), acc);
    }

    Ok(ShapAttribution {
        base_value: value[0],
        phi,
        output: model.predict(x),
        instance: x.to_vec(),
        background_size: background.len(),
    })
}
