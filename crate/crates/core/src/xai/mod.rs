//! The four explanation procedures (Shapley attributions, decision rules,
//! counterfactuals, causal graphs) and their chart renderings.

mod causal;
mod counterfactual;
mod explain;
mod rules;
mod shap;

pub use causal::{causal_discover, causal_from_matrix, graph_score, CausalEdge, CausalGraph, DEFAULT_MAX_NODES, LABEL_NODE, MIN_CAUSAL_ROWS};
pub use counterfactual::{counterfactual_search, CfTarget, Counterfactual, FeatureDelta, INTERIOR_EPS};
pub use explain::{explain, fit_surrogate, ExplainKind, ExplainOptions, Explanation, Surrogate};
pub use rules::{extract_rules, Conjunct, EvalSplit, Op, Rule, RuleModel, RuleParams, RuleSet};
pub use shap::{shap_explain, ShapAttribution, MAX_SHAP_FEATURES};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::{ChartKind, ChartSpec, DagEdge, Point, Series};
use crate::models::ModelError;

#[derive(Debug, Error)]
pub enum XaiError {
    #[error("model uses {used} features, exact Shapley enumeration supports at most {max}")]
    TooManyFeatures { used: usize, max: usize },
    #[error("background set is empty")]
    EmptyBackground,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("matrix has unlabeled rows")]
    UnlabeledData,
    #[error("no leaf of the tree satisfies the target")]
    TargetUnreachable,
    #[error("every leaf satisfying the target requires changing an immutable feature")]
    ImmutableConflict,
    #[error("{nodes} nodes exceed the causal search limit of {max}")]
    TooManyNodes { nodes: usize, max: usize },
    #[error("{rows} rows, causal search needs at least {min}")]
    TooFewRows { rows: usize, min: usize },
    #[error("instance {index} out of range ({rows} rows)")]
    InstanceOutOfRange { index: usize, rows: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid artifact: {0}")]
    InvalidArtifact(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, XaiError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExplanationArtifact {
    Shap(ShapAttribution),
    Rules(RuleSet),
    Counterfactual(Counterfactual),
    Causal(CausalGraph),
}

impl ExplanationArtifact {
    pub fn kind(&self) -> ExplainKind {
        match self {
            ExplanationArtifact::Shap(_) => ExplainKind::Shap,
            ExplanationArtifact::Rules(_) => ExplainKind::Rules,
            ExplanationArtifact::Counterfactual(_) => ExplainKind::Cf,
            ExplanationArtifact::Causal(_) => ExplainKind::Causal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedArtifact {
    pub chart: ChartSpec,
    /// Base64 of the PNG rendering of `chart`.
    pub img64: String,
}

pub fn chart_for(artifact: &ExplanationArtifact) -> ChartSpec {
    match artifact {
        ExplanationArtifact::Shap(a) => {
            let points = a.ranked().into_iter().map(|(name, v)| Point::new(name, v)).collect();
            let title = format!("Feature contributions (base {:.3}, output {:.3})", a.base_value, a.output);
            ChartSpec::bar(&title, "feature", "contribution", Series { name: "phi".into(), points })
        }
        ExplanationArtifact::Rules(rs) => {
            let rows = rs
                .rules
                .iter()
                .map(|r| vec![r.describe(), format!("{:.3}", r.precision), format!("{:.3}", r.recall), r.support.to_string()])
                .collect();
            let columns = ["rule", "precision", "recall", "support"].map(String::from).to_vec();
            ChartSpec::table(ChartKind::RulesTable, "Decision rules", columns, rows)
        }
        ExplanationArtifact::Counterfactual(cf) => {
            let rows = cf
                .changed_features
                .iter()
                .map(|d| vec![d.name.clone(), format!("{:.4}", d.from), format!("{:.4}", d.to), format!("{:+.4}", d.delta)])
                .collect();
            let columns = ["feature", "from", "to", "delta"].map(String::from).to_vec();
            let title = format!(
                "Counterfactual: output {:.3} -> {:.3}, L1 distance {:.4}",
                cf.original_output, cf.achieved_output, cf.distance
            );
            ChartSpec::table(ChartKind::DeltaTable, &title, columns, rows)
        }
        ExplanationArtifact::Causal(g) => {
            let edges = g.edges.iter().map(|e| DagEdge { from: e.from.clone(), to: e.to.clone(), weight: e.score_gain }).collect();
            ChartSpec::dag(&format!("Causal graph (BIC {:.1})", g.total_score), g.nodes.clone(), edges)
        }
    }
}

pub fn render_artifact(artifact: &ExplanationArtifact) -> RenderedArtifact {
    let chart = chart_for(artifact);
    let img64 = chart.to_img64();
    RenderedArtifact { chart, img64 }
}
