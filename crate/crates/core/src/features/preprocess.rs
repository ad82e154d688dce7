use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::matrix::{DroppedFeature, FeatureMatrix, Label, NormalizationParam, PreprocessStep};
use super::stats::pearson;
use super::{FeatureError, Result};

pub const DEFAULT_CORR_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Pairs with `|r|` at or above this are pruned.
    pub corr_threshold: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { corr_threshold: DEFAULT_CORR_THRESHOLD }
    }
}

fn row_key(row: &[f64], label: Option<Label>) -> (Vec<u64>, Option<Label>) {
    let bits = row
        .iter()
        .map(|v| {
            if v.is_nan() {
                f64::NAN.to_bits()
            } else {
                (v + 0.0).to_bits()
            }
        })
        .collect();
    (bits, label)
}

fn dedup(m: &mut FeatureMatrix, stage: &str) {
    let mut seen = HashSet::new();
    let keep: Vec<usize> = (0..m.n_rows()).filter(|&i| seen.insert(row_key(&m.rows[i], m.labels[i]))).collect();
    let removed = m.n_rows() - keep.len();
    if removed > 0 {
        let log = std::mem::take(&mut m.preprocessing_log);
        *m = m.select_rows(&keep);
        m.preprocessing_log = log;
    }
    m.preprocessing_log.push(PreprocessStep::Deduplicate { stage: stage.to_string(), removed });
}

/// Deduplicates rows, mean-imputes missing cells, min-max normalises every
/// column to `[0, 1]` and drops the later column of every pair whose absolute
/// Pearson correlation reaches `corr_threshold`. Rows that became identical
/// through imputation or pruning are removed in a final pass. Each step is
/// appended to `preprocessing_log`.
pub fn preprocess(matrix: &FeatureMatrix, config: &PreprocessConfig) -> Result<FeatureMatrix> {
    matrix.check_rectangular()?;
    if matrix.n_rows() == 0 {
        return Err(FeatureError::EmptyMatrix);
    }
    let mut m = matrix.clone();
    dedup(&mut m, "raw");

    // mean imputation
    let mut cells = 0;
    let mut column_means = BTreeMap::new();
    for j in 0..m.n_features() {
        let observed: Vec<f64> = m.rows.iter().map(|r| r[j]).filter(|v| !v.is_nan()).collect();
        if observed.is_empty() {
            return Err(FeatureError::AllMissingColumn(m.feature_names[j].clone()));
        }
        if observed.len() == m.n_rows() {
            continue;
        }
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        for r in &mut m.rows {
            if r[j].is_nan() {
                r[j] = mean;
                cells += 1;
            }
        }
        column_means.insert(m.feature_names[j].clone(), mean);
    }
    m.preprocessing_log.push(PreprocessStep::Impute { cells, column_means });

    // min-max normalisation
    let mut params = Vec::with_capacity(m.n_features());
    for j in 0..m.n_features() {
        let (lo, hi) = m.rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])));
        let p = NormalizationParam { feature: m.feature_names[j].clone(), min: lo, max: hi, constant: hi <= lo };
        for r in &mut m.rows {
            r[j] = p.apply(r[j]);
        }
        params.push(p);
    }
    m.preprocessing_log.push(PreprocessStep::Normalize { params });

    // correlation pruning, earlier column in canonical order survives
    let columns: Vec<Vec<f64>> = (0..m.n_features()).map(|j| m.column(j)).collect();
    let mut dropped_idx = vec![false; m.n_features()];
    let mut dropped = Vec::new();
    for i in 0..m.n_features() {
        if dropped_idx[i] {
            continue;
        }
        for j in (i + 1)..m.n_features() {
            if dropped_idx[j] {
                continue;
            }
            if let Some(r) = pearson(&columns[i], &columns[j]) {
                if r.abs() >= config.corr_threshold {
                    dropped_idx[j] = true;
                    dropped.push(DroppedFeature {
                        feature: m.feature_names[j].clone(),
                        correlated_with: m.feature_names[i].clone(),
                        r,
                    });
                }
            }
        }
    }
    if dropped_idx.iter().any(|&d| d) {
        let keep: Vec<usize> = (0..m.n_features()).filter(|&j| !dropped_idx[j]).collect();
        m.feature_names = keep.iter().map(|&j| m.feature_names[j].clone()).collect();
        for r in &mut m.rows {
            *r = keep.iter().map(|&j| r[j]).collect();
        }
    }
    m.preprocessing_log.push(PreprocessStep::PruneCorrelated { threshold: config.corr_threshold, dropped });

    dedup(&mut m, "post_prune");
    Ok(m)
}
