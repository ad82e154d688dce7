use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::window::WindowFrame;
use super::{FeatureError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    NotIntoxicated,
    Intoxicated,
}

impl Label {
    pub fn from_positive(positive: bool) -> Self {
        if positive {
            Label::Intoxicated
        } else {
            Label::NotIntoxicated
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Intoxicated
    }

    /// 1.0 for intoxicated, 0.0 otherwise.
    pub fn as_target(self) -> f64 {
        if self.is_positive() {
            1.0
        } else {
            0.0
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Intoxicated => "intoxicated",
            Label::NotIntoxicated => "not_intoxicated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParam {
    pub feature: String,
    pub min: f64,
    pub max: f64,
    /// Constant columns are mapped to 0.5 instead of being divided by zero.
    pub constant: bool,
}

impl NormalizationParam {
    pub fn apply(&self, v: f64) -> f64 {
        if self.constant {
            0.5
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    pub fn invert(&self, v: f64) -> f64 {
        if self.constant {
            self.min
        } else {
            self.min + v * (self.max - self.min)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub feature: String,
    pub correlated_with: String,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum PreprocessStep {
    Deduplicate { stage: String, removed: usize },
    Impute { cells: usize, column_means: BTreeMap<String, f64> },
    Normalize { params: Vec<NormalizationParam> },
    PruneCorrelated { threshold: f64, dropped: Vec<DroppedFeature> },
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let cells: Vec<Vec<Option<f64>>> =
            rows.iter().map(|r| r.iter().map(|v| if v.is_nan() { None } else { Some(*v) }).collect()).collect();
        cells.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let cells: Vec<Vec<Option<f64>>> = Vec::deserialize(d)?;
        Ok(cells.into_iter().map(|r| r.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect()).collect())
    }
}

/// One participant's windows as a rectangular matrix. Missing cells are NaN in
/// memory and `null` on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub participant_id: String,
    pub feature_names: Vec<String>,
    #[serde(with = "nan_as_null")]
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<Option<Label>>,
    /// Window start time of each row; rows are kept in chronological order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub window_starts: Vec<f64>,
    #[serde(default)]
    pub preprocessing_log: Vec<PreprocessStep>,
}

impl FeatureMatrix {
    pub fn new(participant_id: impl Into<String>, feature_names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<Option<Label>>) -> Self {
        Self {
            participant_id: participant_id.into(),
            feature_names,
            rows,
            labels,
            window_starts: Vec::new(),
            preprocessing_log: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn check_rectangular(&self) -> Result<()> {
        let expected = self.feature_names.len();
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != expected {
                return Err(FeatureError::Ragged { row: i, len: r.len(), expected });
            }
        }
        if self.labels.len() != self.rows.len() {
            return Err(FeatureError::Ragged { row: self.rows.len(), len: self.labels.len(), expected: self.rows.len() });
        }
        if !self.window_starts.is_empty() && self.window_starts.len() != self.rows.len() {
            return Err(FeatureError::Ragged {
                row: self.rows.len(),
                len: self.window_starts.len(),
                expected: self.rows.len(),
            });
        }
        Ok(())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn has_missing(&self) -> bool {
        self.rows.iter().flatten().any(|v| v.is_nan())
    }

    /// Copy restricted to the given row indices (in the given order).
    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            participant_id: self.participant_id.clone(),
            feature_names: self.feature_names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            window_starts: if self.window_starts.is_empty() {
                Vec::new()
            } else {
                idx.iter().map(|&i| self.window_starts[i]).collect()
            },
            preprocessing_log: self.preprocessing_log.clone(),
        }
    }

    /// Rows that carry a label, in order.
    pub fn labeled(&self) -> FeatureMatrix {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| self.labels[i].is_some()).collect();
        self.select_rows(&idx)
    }

    /// 0/1 targets; unlabeled rows yield `None`.
    pub fn targets(&self) -> Option<Vec<f64>> {
        self.labels.iter().map(|l| l.map(Label::as_target)).collect()
    }

    pub fn normalization(&self) -> Option<&[NormalizationParam]> {
        self.preprocessing_log.iter().rev().find_map(|s| match s {
            PreprocessStep::Normalize { params } => Some(params.as_slice()),
            _ => None,
        })
    }

    /// Maps a normalised value of `feature` back to sensor units when the
    /// normalisation parameters are on record.
    pub fn denormalize(&self, feature: &str, v: f64) -> Option<f64> {
        self.normalization()?.iter().find(|p| p.feature == feature).map(|p| p.invert(v))
    }
}

/// Groups labelled frames into one matrix per participant. Rows are ordered by
/// window start and columns by the sorted union of feature names.
pub fn matrices_from_frames(frames: &[WindowFrame]) -> Vec<FeatureMatrix> {
    let names: Vec<String> = frames
        .iter()
        .flat_map(|f| f.features.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut by_participant: BTreeMap<&str, Vec<&WindowFrame>> = BTreeMap::new();
    for f in frames {
        by_participant.entry(f.participant_id.as_str()).or_default().push(f);
    }
    by_participant
        .into_iter()
        .map(|(pid, mut fs)| {
            fs.sort_by(|a, b| a.window_start.total_cmp(&b.window_start));
            let rows = fs
                .iter()
                .map(|f| names.iter().map(|n| f.features.get(n).copied().flatten().unwrap_or(f64::NAN)).collect())
                .collect();
            FeatureMatrix {
                participant_id: pid.to_string(),
                feature_names: names.clone(),
                rows,
                labels: fs.iter().map(|f| f.label).collect(),
                window_starts: fs.iter().map(|f| f.window_start).collect(),
                preprocessing_log: Vec::new(),
            }
        })
        .collect()
}
