//! Score-based causal structure search: greedy hill climbing over single-edge
//! additions, removals and reversals, scored by linear-Gaussian BIC.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Result, XaiError};
use crate::features::FeatureMatrix;

pub const DEFAULT_MAX_NODES: usize = 12;
pub const MIN_CAUSAL_ROWS: usize = 20;
/// Name of the node carrying the 0/1 label when it joins the search.
pub const LABEL_NODE: &str = "intoxicated";

/// Moves must improve the score by more than this to be taken.
const MIN_IMPROVEMENT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalEdge {
    pub from: String,
    pub to: String,
    /// Drop in total score if this edge alone is removed from the final graph.
    pub score_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<CausalEdge>,
    /// BIC of the final graph (higher is better).
    pub total_score: f64,
    /// Score before the first move and after every accepted move.
    pub score_trace: Vec<f64>,
    pub n_rows: usize,
}

impl CausalGraph {
    /// Kahn's algorithm; `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let idx: HashMap<&str, usize> = self.nodes.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut indeg = vec![0usize; n];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            let (a, b) = (idx[e.from.as_str()], idx[e.to.as_str()]);
            out[a].push(b);
            indeg[b] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop() {
            order.push(i);
            for &j in &out[i] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.push(j);
                }
            }
        }
        (order.len() == n).then_some(order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Move {
    Add,
    Remove,
    Reverse,
}

struct Scorer {
    n: f64,
    /// Centered scatter matrix of the columns.
    scatter: Vec<Vec<f64>>,
    cache: HashMap<(usize, u64), f64>,
}

impl Scorer {
    fn new(data: &[Vec<f64>], p: usize) -> Self {
        let n = data.len();
        let means: Vec<f64> = (0..p).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let mut scatter = vec![vec![0.0; p]; p];
        for r in data {
            for a in 0..p {
                let da = r[a] - means[a];
                for b in a..p {
                    scatter[a][b] += da * (r[b] - means[b]);
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                scatter[a][b] = scatter[b][a];
            }
        }
        Self { n: n as f64, scatter, cache: HashMap::new() }
    }

    /// Residual sum of squares of regressing `node` on `parents` with intercept.
    fn rss(&self, node: usize, parents: &[usize]) -> f64 {
        let syy = self.scatter[node][node];
        if parents.is_empty() {
            return syy;
        }
        let k = parents.len();
        let mut a: Vec<Vec<f64>> = parents.iter().map(|&i| parents.iter().map(|&j| self.scatter[i][j]).collect()).collect();
        let mut b: Vec<f64> = parents.iter().map(|&i| self.scatter[i][node]).collect();
        // ridge proportional to the diagonal keeps collinear parents solvable
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += 1e-10 * row[i].abs().max(1e-300);
        }
        let beta = match solve(&mut a, &mut b) {
            Some(beta) => beta,
            None => return syy,
        };
        let explained: f64 = (0..k).map(|i| beta[i] * self.scatter[parents[i]][node]).sum();
        (syy - explained).max(0.0)
    }

    fn local(&mut self, node: usize, parents: u64) -> f64 {
        if let Some(&s) = self.cache.get(&(node, parents)) {
            return s;
        }
        let ps: Vec<usize> = (0..64).filter(|&i| parents & (1u64 << i) != 0).collect();
        let var = (self.rss(node, &ps) / self.n).max(1e-12);
        let loglik = -0.5 * self.n * ((2.0 * std::f64::consts::PI * var).ln() + 1.0);
        let k = ps.len() as f64 + 2.0;
        let s = loglik - 0.5 * k * self.n.ln();
        self.cache.insert((node, parents), s);
        s
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// True if `to` is reachable from `from` along the parent sets.
fn reaches(parents: &[u64], from: usize, to: usize) -> bool {
    let p = parents.len();
    let mut seen = vec![false; p];
    let mut stack = vec![from];
    while let Some(u) = stack.pop() {
        if u == to {
            return true;
        }
        if seen[u] {
            continue;
        }
        seen[u] = true;
        for (v, &pv) in parents.iter().enumerate() {
            if pv & (1u64 << u) != 0 && !seen[v] {
                stack.push(v);
            }
        }
    }
    false
}

/// Searches a DAG over the columns of `data`. Candidate moves are scanned in
/// `(from, to)` index order and the first best-scoring one is taken, so the
/// result is deterministic.
pub fn causal_discover(names: &[String], data: &[Vec<f64>], max_nodes: usize) -> Result<CausalGraph> {
    let p = names.len();
    if p > max_nodes || p > 63 {
        return Err(XaiError::TooManyNodes { nodes: p, max: max_nodes });
    }
    if data.len() < MIN_CAUSAL_ROWS {
        return Err(XaiError::TooFewRows { rows: data.len(), min: MIN_CAUSAL_ROWS });
    }
    if data.iter().any(|r| r.len() != p) {
        return Err(XaiError::Shape(format!("expected {p} columns")));
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(XaiError::Shape("non-finite value in causal data".into()));
    }

    let mut scorer = Scorer::new(data, p);
    let mut parents = vec![0u64; p];
    let mut total: f64 = (0..p).map(|j| scorer.local(j, 0)).sum();
    let mut trace = vec![total];

    loop {
        let mut best: Option<(f64, Move, usize, usize)> = None;
        for u in 0..p {
            for v in 0..p {
                if u == v {
                    continue;
                }
                let bit_u = 1u64 << u;
                let bit_v = 1u64 << v;
                let candidate = if parents[v] & bit_u != 0 {
                    // u -> v exists
                    let remove = scorer.local(v, parents[v] & !bit_u) - scorer.local(v, parents[v]);
                    let mut choice = (remove, Move::Remove);
                    let mut trial = parents.clone();
                    trial[v] &= !bit_u;
                    if !reaches(&trial, u, v) {
                        let rev = remove + scorer.local(u, parents[u] | bit_v) - scorer.local(u, parents[u]);
                        if rev > remove {
                            choice = (rev, Move::Reverse);
                        }
                    }
                    Some(choice)
                } else if parents[u] & bit_v == 0 && !reaches(&parents, v, u) {
                    Some((scorer.local(v, parents[v] | bit_u) - scorer.local(v, parents[v]), Move::Add))
                } else {
                    None
                };
                if let Some((delta, mv)) = candidate {
                    if delta > MIN_IMPROVEMENT && best.is_none_or(|(bd, ..)| delta > bd) {
                        best = Some((delta, mv, u, v));
                    }
                }
            }
        }
        let Some((_, mv, u, v)) = best else { break };
        match mv {
            Move::Add => parents[v] |= 1u64 << u,
            Move::Remove => parents[v] &= !(1u64 << u),
            Move::Reverse => {
                parents[v] &= !(1u64 << u);
                parents[u] |= 1u64 << v;
            }
        }
        total = (0..p).map(|j| scorer.local(j, parents[j])).sum();
        trace.push(total);
    }

    let mut edges = Vec::new();
    for v in 0..p {
        for u in 0..p {
            if parents[v] & (1u64 << u) != 0 {
                let gain = scorer.local(v, parents[v]) - scorer.local(v, parents[v] & !(1u64 << u));
                edges.push(CausalEdge { from: names[u].clone(), to: names[v].clone(), score_gain: gain });
            }
        }
    }
    edges.sort_by(|a, b| a.from.cmp(&b.from).then(a.to.cmp(&b.to)));
    Ok(CausalGraph { nodes: names.to_vec(), edges, total_score: total, score_trace: trace, n_rows: data.len() })
}

/// Linear-Gaussian BIC of a given edge set, for checking recorded gains.
pub fn graph_score(names: &[String], data: &[Vec<f64>], edges: &[(String, String)]) -> f64 {
    let p = names.len();
    let idx: HashMap<&str, usize> = names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut parents = vec![0u64; p];
    for (a, b) in edges {
        parents[idx[b.as_str()]] |= 1u64 << idx[a.as_str()];
    }
    let mut scorer = Scorer::new(data, p);
    (0..p).map(|j| scorer.local(j, parents[j])).sum()
}

/// Runs the search over the matrix columns, optionally adding the label as a
/// node.
pub fn causal_from_matrix(matrix: &FeatureMatrix, include_label: bool, max_nodes: usize) -> Result<CausalGraph> {
    let mut names = matrix.feature_names.clone();
    let mut data = matrix.rows.clone();
    if include_label {
        let y = matrix.targets().ok_or(XaiError::UnlabeledData)?;
        names.push(LABEL_NODE.to_string());
        for (r, t) in data.iter_mut().zip(y) {
            r.push(t);
        }
    }
    causal_discover(&names, &data, max_nodes)
}
