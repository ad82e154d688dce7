use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::metrics::ModelMetrics;
use super::{Model, ModelError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub name: String,
    pub model: Model,
    /// Held-out metrics; selection must never see training-set scores.
    pub metrics: ModelMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    pub name: String,
    pub metrics: ModelMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen: Candidate,
    pub ranking: Vec<RankEntry>,
}

/// Descending on F1, then accuracy, precision and recall.
fn compare(a: &ModelMetrics, b: &ModelMetrics) -> Ordering {
    b.f1.total_cmp(&a.f1)
        .then(b.accuracy.total_cmp(&a.accuracy))
        .then(b.precision.total_cmp(&a.precision))
        .then(b.recall.total_cmp(&a.recall))
}

/// Picks the best candidate; equal metrics keep input order.
pub fn select_best(candidates: Vec<Candidate>) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(ModelError::NoCandidates);
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| compare(&candidates[i].metrics, &candidates[j].metrics));
    let ranking = order
        .iter()
        .enumerate()
        .map(|(rank, &i)| RankEntry { rank: rank + 1, name: candidates[i].name.clone(), metrics: candidates[i].metrics.clone() })
        .collect();
    let winner = order[0];
    let chosen = candidates.into_iter().nth(winner).expect("winner index in range");
    Ok(Selection { chosen, ranking })
}
