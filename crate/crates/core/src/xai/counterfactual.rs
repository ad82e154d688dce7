//! Exact minimal-L1 counterfactuals for a single decision tree.
//!
//! Each leaf that meets the target describes a box of inputs. Projecting the
//! instance onto every such box and keeping the nearest projection gives the
//! L1-optimal counterfactual over the normalized feature space.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Result, XaiError};
use crate::models::{is_positive, FeatureBox, Predictor, TreeModel};

/// Offset used to step strictly inside a `lo < x` side of a leaf box.
pub const INTERIOR_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum CfTarget {
    /// Positive (`true`) or negative class under the 0.5 decision threshold.
    Class(bool),
    /// Output at least the threshold.
    AtLeast(f64),
    /// Output strictly below the threshold.
    Below(f64),
}

impl CfTarget {
    pub fn satisfied_by(&self, output: f64) -> bool {
        match *self {
            CfTarget::Class(positive) => is_positive(output) == positive,
            CfTarget::AtLeast(t) => output >= t,
            CfTarget::Below(t) => output < t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDelta {
    pub feature: usize,
    pub name: String,
    pub from: f64,
    pub to: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterfactual {
    pub original: Vec<f64>,
    pub modified: Vec<f64>,
    pub changed_features: Vec<FeatureDelta>,
    /// L1 distance in normalized units, the sum of |delta|.
    pub distance: f64,
    pub original_output: f64,
    pub achieved_output: f64,
    pub target: CfTarget,
}

/// Nearest point of the leaf box, with constrained coordinates also kept in
/// `[0, 1]`. `None` when the box has no point in that range.
fn project(x: &[f64], b: &FeatureBox) -> Option<Vec<f64>> {
    let mut z = x.to_vec();
    for j in 0..x.len() {
        if !b.is_constrained(j) || (b.lo[j] < x[j] && x[j] <= b.hi[j]) {
            continue;
        }
        let lo = if b.lo[j].is_finite() { b.lo[j] + INTERIOR_EPS } else { 0.0 };
        let hi = b.hi[j].min(1.0);
        let lo = lo.max(0.0);
        if lo > hi {
            return None;
        }
        z[j] = x[j].clamp(lo, hi);
        if !(b.lo[j] < z[j] && z[j] <= b.hi[j]) {
            return None;
        }
    }
    Some(z)
}

pub fn counterfactual_search(
    model: &TreeModel,
    feature_names: &[String],
    x: &[f64],
    target: CfTarget,
    immutable: &BTreeSet<String>,
) -> Result<Counterfactual> {
    if x.len() != model.n_features || feature_names.len() != model.n_features {
        return Err(XaiError::Shape(format!("model expects {} features", model.n_features)));
    }
    let target_leaves: Vec<(usize, FeatureBox)> =
        model.leaf_boxes().into_iter().filter(|(leaf, _)| target.satisfied_by(model.leaf_output(*leaf))).collect();
    if target_leaves.is_empty() {
        return Err(XaiError::TargetUnreachable);
    }

    let mut blocked_by_immutable = 0usize;
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    for (_, b) in &target_leaves {
        let Some(z) = project(x, b) else { continue };
        if !target.satisfied_by(model.predict(&z)) {
            continue;
        }
        let changed: Vec<usize> = (0..x.len()).filter(|&j| z[j] != x[j]).collect();
        if changed.iter().any(|&j| immutable.contains(&feature_names[j])) {
            blocked_by_immutable += 1;
            continue;
        }
        let dist: f64 = changed.iter().map(|&j| (z[j] - x[j]).abs()).sum();
        let better = match &best {
            None => true,
            Some((bd, bc, _)) => {
                if (dist - bd).abs() > 1e-12 {
                    dist < *bd
                } else if changed.len() != bc.len() {
                    changed.len() < bc.len()
                } else {
                    let names = |c: &[usize]| c.iter().map(|&j| feature_names[j].clone()).collect::<Vec<_>>();
                    names(&changed) < names(bc)
                }
            }
        };
        if better {
            best = Some((dist, changed, z));
        }
    }

    let Some((distance, changed, modified)) = best else {
        return Err(if blocked_by_immutable > 0 { XaiError::ImmutableConflict } else { XaiError::TargetUnreachable });
    };
    let changed_features = changed
        .iter()
        .map(|&j| FeatureDelta { feature: j, name: feature_names[j].clone(), from: x[j], to: modified[j], delta: modified[j] - x[j] })
        .collect();
    Ok(Counterfactual {
        original: x.to_vec(),
        achieved_output: model.predict(&modified),
        original_output: model.predict(x),
        modified,
        changed_features,
        distance,
        target,
    })
}
