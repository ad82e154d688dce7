//! CART decision trees: Gini splits for classification, variance reduction for
//! regression, thresholds at midpoints between consecutive distinct values.

use serde::{Deserialize, Serialize};

use super::{ModelError, Predictor, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classify,
    Regress,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub task: Task,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: 3, min_samples_leaf: 1, task: Task::Classify }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafValue {
    /// Probabilities of `[not_intoxicated, intoxicated]`.
    Class(Vec<f64>),
    Regression(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: LeafValue },
}

/// Axis-aligned region reached by a root-to-leaf path. Per feature the region
/// is `lo < x <= hi`; unconstrained sides are infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl FeatureBox {
    pub fn unbounded(n_features: usize) -> Self {
        Self { lo: vec![f64::NEG_INFINITY; n_features], hi: vec![f64::INFINITY; n_features] }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(j, &v)| self.lo[j] < v && v <= self.hi[j])
    }

    pub fn is_feasible(&self) -> bool {
        self.lo.iter().zip(&self.hi).all(|(lo, hi)| lo < hi)
    }

    pub fn is_constrained(&self, j: usize) -> bool {
        self.lo[j].is_finite() || self.hi[j].is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub max_depth: usize,
    pub params: TreeParams,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: TreeParams,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn gini(n0: f64, n1: f64) -> f64 {
    let n = n0 + n1;
    if n == 0.0 {
        return 0.0;
    }
    let (p0, p1) = (n0 / n, n1 / n);
    1.0 - p0 * p0 - p1 * p1
}

fn sse(sum: f64, sum_sq: f64, n: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        (sum_sq - sum * sum / n).max(0.0)
    }
}

impl Builder<'_> {
    fn leaf(&self, idx: &[usize]) -> LeafValue {
        let n = idx.len() as f64;
        match self.params.task {
            Task::Classify => {
                let pos = idx.iter().filter(|&&i| self.y[i] > 0.5).count() as f64;
                let p1 = if n > 0.0 { pos / n } else { 0.0 };
                LeafValue::Class(vec![1.0 - p1, p1])
            }
            Task::Regress => LeafValue::Regression(if n > 0.0 { idx.iter().map(|&i| self.y[i]).sum::<f64>() / n } else { 0.0 }),
        }
    }

    fn is_pure(&self, idx: &[usize]) -> bool {
        let first = self.y[idx[0]];
        match self.params.task {
            Task::Classify => idx.iter().all(|&i| (self.y[i] > 0.5) == (first > 0.5)),
            Task::Regress => idx.iter().all(|&i| self.y[i] == first),
        }
    }

    fn best_split(&self, idx: &[usize]) -> Option<BestSplit> {
        let n = idx.len();
        let min_leaf = self.params.min_samples_leaf.max(1);
        let nf = n as f64;
        let mut best: Option<BestSplit> = None;
        let mut sorted: Vec<(f64, f64)> = Vec::with_capacity(n);
        for f in 0..self.x[idx[0]].len() {
            sorted.clear();
            sorted.extend(idx.iter().map(|&i| (self.x[i][f], self.y[i])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

            let (tot_sum, tot_sq) = sorted.iter().fold((0.0, 0.0), |(s, q), &(_, y)| (s + y, q + y * y));
            let tot_pos = sorted.iter().filter(|(_, y)| *y > 0.5).count() as f64;
            let parent = match self.params.task {
                Task::Classify => gini(nf - tot_pos, tot_pos),
                Task::Regress => sse(tot_sum, tot_sq, nf) / nf,
            };

            let (mut l_sum, mut l_sq, mut l_pos) = (0.0, 0.0, 0.0);
            for k in 0..n - 1 {
                let (v, y) = sorted[k];
                l_sum += y;
                l_sq += y * y;
                if y > 0.5 {
                    l_pos += 1.0;
                }
                let next = sorted[k + 1].0;
                let n_left = k + 1;
                if next <= v || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let (nl, nr) = (n_left as f64, (n - n_left) as f64);
                let children = match self.params.task {
                    Task::Classify => nl / nf * gini(nl - l_pos, l_pos) + nr / nf * gini(nr - (tot_pos - l_pos), tot_pos - l_pos),
                    Task::Regress => (sse(l_sum, l_sq, nl) + sse(tot_sum - l_sum, tot_sq - l_sq, nr)) / nf,
                };
                let gain = parent - children;
                let mut threshold = v + (next - v) / 2.0;
                if threshold >= next {
                    threshold = v;
                }
                // strict improvement keeps the lowest feature, then lowest threshold
                if best.as_ref().is_none_or(|b| gain > b.gain + 1e-12) {
                    best = Some(BestSplit { feature: f, threshold, gain });
                }
            }
        }
        best.filter(|b| b.gain >= -1e-12)
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { value: self.leaf(&idx) });
        if depth >= self.params.max_depth || idx.len() < 2 * self.params.min_samples_leaf.max(1) || self.is_pure(&idx) {
            return at;
        }
        let Some(split) = self.best_split(&idx) else {
            return at;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[at] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        at
    }
}

impl TreeModel {
    /// Fits a tree to rows `x` and targets `y` (0/1 for classification).
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &TreeParams) -> Result<TreeModel> {
        if x.is_empty() {
            return Err(ModelError::EmptyMatrix);
        }
        if x.len() != y.len() {
            return Err(ModelError::Shape(format!("{} rows but {} targets", x.len(), y.len())));
        }
        let n_features = x[0].len();
        if let Some(bad) = x.iter().position(|r| r.len() != n_features) {
            return Err(ModelError::Shape(format!("row {bad} has {} features, expected {n_features}", x[bad].len())));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        let mut b = Builder { x, y, params: *params, nodes: Vec::new() };
        b.build((0..x.len()).collect(), 0);
        Ok(TreeModel { nodes: b.nodes, n_features, max_depth: params.max_depth, params: *params })
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { .. } => return i,
            }
        }
    }

    /// Positive-class probability for classification trees, the leaf mean for
    /// regression trees.
    pub fn leaf_output(&self, leaf: usize) -> f64 {
        match &self.nodes[leaf] {
            Node::Leaf { value: LeafValue::Class(p) } => p.get(1).copied().unwrap_or(0.0),
            Node::Leaf { value: LeafValue::Regression(v) } => *v,
            Node::Split { .. } => panic!("node {leaf} is not a leaf"),
        }
    }

    pub fn set_leaf_output(&mut self, leaf: usize, value: f64) {
        if let Node::Leaf { value: v } = &mut self.nodes[leaf] {
            *v = LeafValue::Regression(value);
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    /// Every leaf with the box of inputs routed to it, in left-to-right order.
    pub fn leaf_boxes(&self) -> Vec<(usize, FeatureBox)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, FeatureBox::unbounded(self.n_features))];
        while let Some((i, b)) = stack.pop() {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    let mut rb = b.clone();
                    rb.lo[*feature] = rb.lo[*feature].max(*threshold);
                    let mut lb = b;
                    lb.hi[*feature] = lb.hi[*feature].min(*threshold);
                    stack.push((*right, rb));
                    stack.push((*left, lb));
                }
                Node::Leaf { .. } => out.push((i, b)),
            }
        }
        out
    }

    /// Checks the structural invariants: children exist, every node is reached
    /// once, thresholds are finite and class vectors sum to one.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() || seen[i] {
                return Err(ModelError::InvalidModel(format!("node {i} missing or shared")));
            }
            seen[i] = true;
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    if !threshold.is_finite() || *feature >= self.n_features {
                        return Err(ModelError::InvalidModel(format!("bad split at node {i}")));
                    }
                    stack.push(*left);
                    stack.push(*right);
                }
                Node::Leaf { value: LeafValue::Class(p) } => {
                    if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                        return Err(ModelError::InvalidModel(format!("leaf {i} probabilities do not sum to 1")));
                    }
                }
                Node::Leaf { .. } => {}
            }
        }
        if seen.iter().all(|&s| s) {
            Ok(())
        } else {
            Err(ModelError::InvalidModel("unreachable nodes".into()))
        }
    }
}

impl Predictor for TreeModel {
    fn predict(&self, x: &[f64]) -> f64 {
        self.leaf_output(self.leaf_index(x))
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

/// Trains on a preprocessed matrix. Classification targets are the labels;
/// regression regresses the 0/1 label.
pub fn train_tree(matrix: &FeatureMatrix, params: &TreeParams) -> Result<TreeModel> {
    if matrix.n_rows() == 0 {
        return Err(ModelError::EmptyMatrix);
    }
    let y = matrix.targets().ok_or(ModelError::UnlabeledData)?;
    TreeModel::fit(&matrix.rows, &y, params)
}
