//! Runs one explanation procedure against a participant's registered model.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    causal_discover, counterfactual_search, extract_rules, render_artifact, shap_explain, CfTarget, ExplanationArtifact,
    Result, XaiError, DEFAULT_MAX_NODES, LABEL_NODE,
};
use crate::chart::ChartSpec;
use crate::models::{is_positive, Model, Predictor, RegistryEntry, Task, TreeModel, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainKind {
    Shap,
    Rules,
    Cf,
    Causal,
}

impl ExplainKind {
    pub const ALL: [ExplainKind; 4] = [ExplainKind::Shap, ExplainKind::Rules, ExplainKind::Cf, ExplainKind::Causal];

    pub fn as_str(self) -> &'static str {
        match self {
            ExplainKind::Shap => "shap",
            ExplainKind::Rules => "rules",
            ExplainKind::Cf => "cf",
            ExplainKind::Causal => "causal",
        }
    }
}

impl fmt::Display for ExplainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExplainKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "shap" => Ok(ExplainKind::Shap),
            "rules" => Ok(ExplainKind::Rules),
            "cf" | "counterfactual" => Ok(ExplainKind::Cf),
            "causal" => Ok(ExplainKind::Causal),
            other => Err(format!("unknown explanation kind {other:?} (expected shap, rules, cf or causal)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainOptions {
    /// Features a counterfactual may not change.
    pub immutable: BTreeSet<String>,
    /// Training rows used as the Shapley background, evenly strided.
    pub max_background: usize,
    pub causal_max_nodes: usize,
    pub surrogate_depth: usize,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        Self { immutable: BTreeSet::new(), max_background: 100, causal_max_nodes: DEFAULT_MAX_NODES, surrogate_depth: 4 }
    }
}

/// Regression tree mimicking a non-tree model for counterfactual search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub tree: TreeModel,
    /// Share of rows where surrogate and model agree on the class.
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub participant_id: String,
    pub kind: ExplainKind,
    pub instance: usize,
    pub model_kind: String,
    /// Model output at the explained instance.
    pub prediction: f64,
    pub artifact: ExplanationArtifact,
    pub chart: ChartSpec,
    pub img64: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate_fidelity: Option<f64>,
}

/// Fits a regression tree to the model's outputs on the training rows and
/// measures class agreement over `eval_rows`.
pub fn fit_surrogate(model: &dyn Predictor, train_rows: &[Vec<f64>], eval_rows: &[Vec<f64>], depth: usize) -> Result<Surrogate> {
    let y: Vec<f64> = train_rows.iter().map(|r| model.predict(r)).collect();
    let tree = TreeModel::fit(train_rows, &y, &TreeParams { max_depth: depth, min_samples_leaf: 1, task: Task::Regress })?;
    let agree = eval_rows.iter().filter(|r| is_positive(tree.predict(r)) == is_positive(model.predict(r))).count();
    let fidelity = if eval_rows.is_empty() { 1.0 } else { agree as f64 / eval_rows.len() as f64 };
    Ok(Surrogate { tree, fidelity })
}

fn background(rows: &[Vec<f64>], max: usize) -> Vec<Vec<f64>> {
    if rows.len() <= max || max == 0 {
        return rows.to_vec();
    }
    (0..max).map(|k| rows[k * rows.len() / max].clone()).collect()
}

pub fn explain(entry: &RegistryEntry, kind: ExplainKind, instance: usize, opts: &ExplainOptions) -> Result<Explanation> {
    let data = &entry.data;
    if instance >= data.n_rows() {
        return Err(XaiError::InstanceOutOfRange { index: instance, rows: data.n_rows() });
    }
    let x = &data.rows[instance];
    let names = &data.feature_names;
    let model = &entry.model;
    let prediction = model.predict(x);
    let mut surrogate_fidelity = None;

    let artifact = match kind {
        ExplainKind::Shap => {
            let bg = background(entry.train_rows(), opts.max_background);
            ExplanationArtifact::Shap(shap_explain(model, names, x, &bg)?)
        }
        ExplainKind::Rules => match model {
            Model::Rules(r) => ExplanationArtifact::Rules(r.rule_set.clone()),
            _ => {
                let train = data.select_rows(&(0..entry.n_train).collect::<Vec<_>>());
                ExplanationArtifact::Rules(extract_rules(&train, &entry.rule_params)?)
            }
        },
        ExplainKind::Cf => {
            let target = CfTarget::Class(!is_positive(prediction));
            let cf = match model {
                Model::Tree(t) => counterfactual_search(t, names, x, target, &opts.immutable)?,
                other => {
                    let s = fit_surrogate(other, entry.train_rows(), &data.rows, opts.surrogate_depth)?;
                    tracing::info!(participant = %entry.participant_id, fidelity = s.fidelity, "counterfactual via surrogate tree");
                    surrogate_fidelity = Some(s.fidelity);
                    let target = CfTarget::Class(!is_positive(s.tree.predict(x)));
                    counterfactual_search(&s.tree, names, x, target, &opts.immutable)?
                }
            };
            ExplanationArtifact::Counterfactual(cf)
        }
        ExplainKind::Causal => {
            // keep the features with the largest attributions for this instance
            let bg = background(entry.train_rows(), opts.max_background);
            let attr = shap_explain(model, names, x, &bg)?;
            let keep = opts.causal_max_nodes.saturating_sub(1);
            let mut cols: Vec<usize> =
                attr.ranked().into_iter().take(keep).filter_map(|(n, _)| data.feature_index(n)).collect();
            cols.sort_unstable();
            let y = data.targets().ok_or(XaiError::UnlabeledData)?;
            let mut node_names: Vec<String> = cols.iter().map(|&j| names[j].clone()).collect();
            node_names.push(LABEL_NODE.to_string());
            let rows: Vec<Vec<f64>> = data
                .rows
                .iter()
                .zip(&y)
                .map(|(r, &t)| cols.iter().map(|&j| r[j]).chain(std::iter::once(t)).collect())
                .collect();
            ExplanationArtifact::Causal(causal_discover(&node_names, &rows, opts.causal_max_nodes)?)
        }
    };

    let rendered = render_artifact(&artifact);
    Ok(Explanation {
        participant_id: entry.participant_id.clone(),
        kind,
        instance,
        model_kind: model.kind().to_string(),
        prediction,
        artifact,
        chart: rendered.chart,
        img64: rendered.img64,
        surrogate_fidelity,
    })
}
