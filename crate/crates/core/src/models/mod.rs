//! Per-participant predictors, their metrics and model selection.

mod boosted;
mod cohort;
mod metrics;
mod select;
mod tree;

pub use boosted::{sigmoid, train_boosted, BoostParams, EnsembleModel};
pub use cohort::{train_cohort, CohortParams, Registry, RegistryEntry, SkippedParticipant, SplitPolicy};
pub use metrics::{evaluate, is_positive, Confusion, ModelMetrics, DECISION_THRESHOLD};
pub use select::{select_best, Candidate, RankEntry, Selection};
pub use tree::{train_tree, FeatureBox, LeafValue, Node, Task, TreeModel, TreeParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::xai::RuleModel;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training matrix is empty")]
    EmptyMatrix,
    #[error("matrix has unlabeled rows")]
    UnlabeledData,
    #[error("training data contains non-finite values")]
    NonFinite,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no candidate models to select from")]
    NoCandidates,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("participant {participant_id}: {reason}")]
    InsufficientData { participant_id: String, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("registry json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Anything that maps a feature vector to a score: the positive-class
/// probability for classifiers, the raw output for regressors.
pub trait Predictor {
    fn predict(&self, x: &[f64]) -> f64;

    fn n_features(&self) -> usize;

    /// Indices of features that can influence the output. Defaults to all.
    fn used_features(&self) -> Vec<usize> {
        (0..self.n_features()).collect()
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn predict(&self, x: &[f64]) -> f64 {
        (**self).predict(x)
    }

    fn n_features(&self) -> usize {
        (**self).n_features()
    }

    fn used_features(&self) -> Vec<usize> {
        (**self).used_features()
    }
}

/// Wraps a closure as an opaque predictor over `n_features` inputs.
pub struct FnPredictor<F> {
    pub n_features: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64> Predictor for FnPredictor<F> {
    fn predict(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn n_features(&self) -> usize {
        self.n_features
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Tree(TreeModel),
    Boosted(EnsembleModel),
    Rules(RuleModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Tree(_) => "tree",
            Model::Boosted(_) => "boosted",
            Model::Rules(_) => "rules",
        }
    }

    pub fn as_tree(&self) -> Option<&TreeModel> {
        match self {
            Model::Tree(t) => Some(t),
            _ => None,
        }
    }
}

impl Predictor for Model {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Model::Tree(m) => m.predict(x),
            Model::Boosted(m) => m.predict(x),
            Model::Rules(m) => m.predict(x),
        }
    }

    fn n_features(&self) -> usize {
        match self {
            Model::Tree(m) => m.n_features(),
            Model::Boosted(m) => m.n_features(),
            Model::Rules(m) => m.n_features(),
        }
    }

    fn used_features(&self) -> Vec<usize> {
        match self {
            Model::Tree(m) => m.used_features(),
            Model::Boosted(m) => m.used_features(),
            Model::Rules(m) => m.used_features(),
        }
    }
}
