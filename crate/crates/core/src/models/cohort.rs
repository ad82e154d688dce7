use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::boosted::{BoostParams, EnsembleModel};
use super::metrics::{evaluate, ModelMetrics};
use super::select::{select_best, Candidate, RankEntry};
use super::tree::{Task, TreeModel, TreeParams};
use super::{Model, ModelError, Result};
use crate::features::{preprocess, FeatureMatrix, PreprocessConfig};
use crate::xai::{extract_rules, RuleModel, RuleParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPolicy {
    /// Earliest fraction of each participant's windows used for training.
    pub train_fraction: f64,
    pub min_windows: usize,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        Self { train_fraction: 0.8, min_windows: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortParams {
    pub preprocess: PreprocessConfig,
    pub tree_depths: Vec<usize>,
    pub min_samples_leaf: usize,
    pub boosted: BoostParams,
    pub rules: RuleParams,
}

impl Default for CohortParams {
    fn default() -> Self {
        Self {
            preprocess: PreprocessConfig::default(),
            tree_depths: vec![2, 3, 4],
            min_samples_leaf: 2,
            boosted: BoostParams::default(),
            rules: RuleParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub participant_id: String,
    pub model: Model,
    /// Held-out metrics of the chosen model.
    pub metrics: ModelMetrics,
    pub ranking: Vec<RankEntry>,
    /// Preprocessed, labelled windows in chronological order.
    pub data: FeatureMatrix,
    /// The first `n_train` rows of `data` were used for fitting.
    pub n_train: usize,
    pub seed: u64,
    /// Parameters for mining rules from this participant's training split.
    pub rule_params: RuleParams,
}

impl RegistryEntry {
    pub fn train_rows(&self) -> &[Vec<f64>] {
        &self.data.rows[..self.n_train]
    }

    pub fn test_rows(&self) -> &[Vec<f64>] {
        &self.data.rows[self.n_train..]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedParticipant {
    pub participant_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub seed: u64,
    pub policy: SplitPolicy,
    pub params: CohortParams,
    pub participants: BTreeMap<String, RegistryEntry>,
    pub skipped: Vec<SkippedParticipant>,
}

impl Registry {
    pub fn empty() -> Self {
        Self {
            seed: 0,
            policy: SplitPolicy::default(),
            params: CohortParams::default(),
            participants: BTreeMap::new(),
            skipped: Vec::new(),
        }
    }

    pub fn get(&self, participant_id: &str) -> Option<&RegistryEntry> {
        self.participants.get(participant_id)
    }

    /// Mean held-out accuracy over trained participants.
    pub fn mean_accuracy(&self) -> Option<f64> {
        if self.participants.is_empty() {
            return None;
        }
        Some(self.participants.values().map(|e| e.metrics.accuracy).sum::<f64>() / self.participants.len() as f64)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

fn participant_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn train_participant(matrix: &FeatureMatrix, policy: &SplitPolicy, params: &CohortParams, seed: u64) -> Result<RegistryEntry> {
    let pid = matrix.participant_id.clone();
    let insufficient = |reason: String| ModelError::InsufficientData { participant_id: pid.clone(), reason };

    let labeled = matrix.labeled();
    if labeled.n_rows() < policy.min_windows {
        return Err(insufficient(format!("{} labelled windows, need {}", labeled.n_rows(), policy.min_windows)));
    }
    let data = preprocess(&labeled, &params.preprocess).map_err(|e| insufficient(e.to_string()))?;
    if data.n_rows() < policy.min_windows {
        return Err(insufficient(format!("{} windows left after deduplication", data.n_rows())));
    }
    let n = data.n_rows();
    let n_train = ((n as f64 * policy.train_fraction).floor() as usize).clamp(1, n - 1);
    let train = data.select_rows(&(0..n_train).collect::<Vec<_>>());
    let test = data.select_rows(&(n_train..n).collect::<Vec<_>>());
    let y = train.targets().ok_or(ModelError::UnlabeledData)?;

    let mut candidates = Vec::new();
    let mut push = |name: String, model: Model| -> Result<()> {
        let metrics = evaluate(&model, &test)?;
        candidates.push(Candidate { name, model, metrics });
        Ok(())
    };
    for &depth in &params.tree_depths {
        let tp = TreeParams { max_depth: depth, min_samples_leaf: params.min_samples_leaf, task: Task::Classify };
        push(format!("tree_d{depth}"), Model::Tree(TreeModel::fit(&train.rows, &y, &tp)?))?;
    }
    push("boosted".into(), Model::Boosted(EnsembleModel::fit(&train.rows, &y, &params.boosted)?))?;
    let rule_params = RuleParams { seed, ..params.rules.clone() };
    match extract_rules(&train, &rule_params) {
        Ok(rules) => push("rules".into(), Model::Rules(RuleModel::new(rules)))?,
        Err(e) => tracing::warn!(participant = %pid, "rules candidate skipped: {e}"),
    }

    let selection = select_best(candidates)?;
    Ok(RegistryEntry {
        participant_id: pid,
        model: selection.chosen.model,
        metrics: selection.chosen.metrics,
        ranking: selection.ranking,
        data,
        n_train,
        seed,
        rule_params,
    })
}

/// Trains and selects one model per participant. Participants with too little
/// data are skipped with a warning; the cohort run itself never fails.
pub fn train_cohort(matrices: &[FeatureMatrix], policy: &SplitPolicy, params: &CohortParams, seed: u64) -> Registry {
    let results: Vec<(String, Result<RegistryEntry>)> = matrices
        .par_iter()
        .enumerate()
        .map(|(i, m)| (m.participant_id.clone(), train_participant(m, policy, params, participant_seed(seed, i))))
        .collect();

    let mut participants = BTreeMap::new();
    let mut skipped = Vec::new();
    for (pid, res) in results {
        match res {
            Ok(entry) => {
                participants.insert(pid, entry);
            }
            Err(e) => {
                tracing::warn!(participant = %pid, "skipped: {e}");
                skipped.push(SkippedParticipant { participant_id: pid, reason: e.to_string() });
            }
        }
    }
    Registry { seed, policy: *policy, params: params.clone(), participants, skipped }
}
