use serde::{Deserialize, Serialize};

use super::{ModelError, Predictor, Result};
use crate::features::FeatureMatrix;

/// Probabilities at or above this are classified as intoxicated.
pub const DECISION_THRESHOLD: f64 = 0.5;

pub fn is_positive(p: f64) -> bool {
    p >= DECISION_THRESHOLD
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    /// Zero-denominator conventions that were applied.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ModelMetrics {
    /// Metrics from confusion counts. Undefined ratios are reported as 0 and
    /// noted.
    pub fn from_confusion(c: Confusion) -> Self {
        let mut notes = Vec::new();
        let ratio = |num: usize, den: usize, what: &str, notes: &mut Vec<String>| {
            if den == 0 {
                notes.push(format!("{what} undefined (zero denominator), reported as 0"));
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let accuracy = ratio(c.tp + c.tn, c.total(), "accuracy", &mut notes);
        let precision = ratio(c.tp, c.tp + c.fp, "precision", &mut notes);
        let recall = ratio(c.tp, c.tp + c.fn_, "recall", &mut notes);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        for n in &notes {
            tracing::debug!("{n}");
        }
        Self { accuracy, precision, recall, f1, confusion: c, notes }
    }
}

pub fn evaluate(model: &dyn Predictor, matrix: &FeatureMatrix) -> Result<ModelMetrics> {
    let targets = matrix.targets().ok_or(ModelError::UnlabeledData)?;
    let mut c = Confusion::default();
    for (row, y) in matrix.rows.iter().zip(&targets) {
        c.record(is_positive(model.predict(row)), *y > 0.5);
    }
    Ok(ModelMetrics::from_confusion(c))
}
