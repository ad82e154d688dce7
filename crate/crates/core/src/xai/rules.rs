//! Precision-filtered rule mining from bagged shallow trees.
//!
//! Every root-to-positive-leaf path of every tree becomes a conjunctive rule.
//! Rules are scored on the rows the tree did not see (its out-of-bag split),
//! filtered by minimum precision and recall, deduplicated by the box they
//! describe and sorted best first.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Result, XaiError};
use crate::features::FeatureMatrix;
use crate::models::{is_positive, FeatureBox, Predictor, Task, TreeModel, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_precision: f64,
    pub min_recall: f64,
    /// Bootstrap sample size as a fraction of the rows.
    pub sample_fraction: f64,
    /// Without bootstrapping every tree sees all rows and is scored on all rows.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RuleParams {
    fn default() -> Self {
        Self { n_trees: 10, max_depth: 3, min_precision: 0.5, min_recall: 0.01, sample_fraction: 1.0, bootstrap: true, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conjunct {
    pub feature: usize,
    pub name: String,
    pub op: Op,
    pub threshold: f64,
}

impl Conjunct {
    pub fn holds(&self, x: &[f64]) -> bool {
        match self.op {
            Op::Le => x[self.feature] <= self.threshold,
            Op::Gt => x[self.feature] > self.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub conjuncts: Vec<Conjunct>,
    pub precision: f64,
    pub recall: f64,
    /// Evaluation rows matched by the rule.
    pub support: usize,
    /// Id of the entry in [`RuleSet::eval_splits`] the scores come from.
    pub eval_split: usize,
}

impl Rule {
    pub fn matches(&self, x: &[f64]) -> bool {
        self.conjuncts.iter().all(|c| c.holds(x))
    }

    pub fn describe(&self) -> String {
        self.conjuncts
            .iter()
            .map(|c| format!("{} {} {:.4}", c.name, if c.op == Op::Le { "<=" } else { ">" }, c.threshold))
            .collect::<Vec<_>>()
            .join(" and ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSplit {
    pub id: usize,
    pub tree: usize,
    /// Row indices into the matrix the rules were mined from.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub feature_names: Vec<String>,
    pub rules: Vec<Rule>,
    pub eval_splits: Vec<EvalSplit>,
    pub params: RuleParams,
}

/// `(precision, recall, support)` of a conjunction over the given rows.
fn score(conjuncts: &[Conjunct], rows: &[usize], x: &[Vec<f64>], y: &[f64]) -> (f64, f64, usize) {
    let mut matched = 0usize;
    let mut tp = 0usize;
    let mut positives = 0usize;
    for &i in rows {
        let pos = y[i] > 0.5;
        positives += pos as usize;
        if conjuncts.iter().all(|c| c.holds(&x[i])) {
            matched += 1;
            tp += pos as usize;
        }
    }
    let precision = if matched == 0 { 0.0 } else { tp as f64 / matched as f64 };
    let recall = if positives == 0 { 0.0 } else { tp as f64 / positives as f64 };
    (precision, recall, matched)
}

fn conjuncts_of(b: &FeatureBox, names: &[String]) -> Vec<Conjunct> {
    let mut out = Vec::new();
    for j in 0..b.lo.len() {
        if b.lo[j].is_finite() {
            out.push(Conjunct { feature: j, name: names[j].clone(), op: Op::Gt, threshold: b.lo[j] });
        }
        if b.hi[j].is_finite() {
            out.push(Conjunct { feature: j, name: names[j].clone(), op: Op::Le, threshold: b.hi[j] });
        }
    }
    out
}

fn box_key(conjuncts: &[Conjunct]) -> Vec<(usize, Op, u64)> {
    conjuncts.iter().map(|c| (c.feature, c.op, c.threshold.to_bits())).collect()
}

impl RuleSet {
    /// Re-scores `rule` on its recorded evaluation split of `matrix`.
    pub fn recompute(&self, rule: &Rule, matrix: &FeatureMatrix) -> Result<(f64, f64, usize)> {
        let split = self
            .eval_splits
            .iter()
            .find(|s| s.id == rule.eval_split)
            .ok_or_else(|| XaiError::InvalidArtifact(format!("unknown evaluation split {}", rule.eval_split)))?;
        let y = matrix.targets().ok_or(XaiError::UnlabeledData)?;
        Ok(score(&rule.conjuncts, &split.rows, &matrix.rows, &y))
    }
}

pub fn extract_rules(matrix: &FeatureMatrix, params: &RuleParams) -> Result<RuleSet> {
    let y = matrix.targets().ok_or(XaiError::UnlabeledData)?;
    let n = y.len();
    let positives = y.iter().filter(|&&v| v > 0.5).count();
    if positives == 0 || positives == n {
        return Err(XaiError::SingleClass);
    }
    let tree_params = TreeParams { max_depth: params.max_depth, min_samples_leaf: 1, task: Task::Classify };
    let sample_size = ((n as f64 * params.sample_fraction).ceil() as usize).max(1);

    let mut eval_splits = Vec::new();
    let mut candidates: Vec<Rule> = Vec::new();
    for t in 0..params.n_trees {
        let (train_idx, eval_rows) = if params.bootstrap {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(t as u64));
            let sample: Vec<usize> = (0..sample_size).map(|_| rng.random_range(0..n)).collect();
            let mut in_bag = vec![false; n];
            for &i in &sample {
                in_bag[i] = true;
            }
            (sample, (0..n).filter(|&i| !in_bag[i]).collect::<Vec<_>>())
        } else {
            ((0..n).collect(), (0..n).collect())
        };
        if eval_rows.is_empty() {
            continue;
        }
        let xs: Vec<Vec<f64>> = train_idx.iter().map(|&i| matrix.rows[i].clone()).collect();
        let ys: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
        let tree = TreeModel::fit(&xs, &ys, &tree_params)?;

        let split_id = eval_splits.len();
        for (leaf, b) in tree.leaf_boxes() {
            if !is_positive(tree.leaf_output(leaf)) {
                continue;
            }
            let conjuncts = conjuncts_of(&b, &matrix.feature_names);
            if conjuncts.is_empty() {
                continue;
            }
            let (precision, recall, support) = score(&conjuncts, &eval_rows, &matrix.rows, &y);
            candidates.push(Rule { conjuncts, precision, recall, support, eval_split: split_id });
        }
        eval_splits.push(EvalSplit { id: split_id, tree: t, rows: eval_rows });
    }

    candidates.retain(|r| r.precision >= params.min_precision && r.recall >= params.min_recall);

    let mut best: HashMap<Vec<(usize, Op, u64)>, usize> = HashMap::new();
    let mut kept: Vec<Rule> = Vec::new();
    for rule in candidates {
        let key = box_key(&rule.conjuncts);
        match best.get(&key) {
            Some(&at) => {
                let cur = &kept[at];
                if (rule.precision, rule.recall) > (cur.precision, cur.recall) {
                    kept[at] = rule;
                }
            }
            None => {
                best.insert(key, kept.len());
                kept.push(rule);
            }
        }
    }
    kept.sort_by(|a, b| b.precision.total_cmp(&a.precision).then(b.recall.total_cmp(&a.recall)));

    // drop evaluation splits no surviving rule refers to
    eval_splits.retain(|s| kept.iter().any(|r| r.eval_split == s.id));
    Ok(RuleSet { feature_names: matrix.feature_names.clone(), rules: kept, eval_splits, params: params.clone() })
}

/// A rule set used as a classifier: the score of an input is the highest
/// precision among the rules it satisfies, 0 when none fires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleModel {
    pub rule_set: RuleSet,
}

impl RuleModel {
    pub fn new(rule_set: RuleSet) -> Self {
        Self { rule_set }
    }
}

impl Predictor for RuleModel {
    fn predict(&self, x: &[f64]) -> f64 {
        self.rule_set.rules.iter().filter(|r| r.matches(x)).map(|r| r.precision).fold(0.0, f64::max)
    }

    fn n_features(&self) -> usize {
        self.rule_set.feature_names.len()
    }

    fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.rule_set.rules.iter().flat_map(|r| r.conjuncts.iter().map(|c| c.feature)).collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}
