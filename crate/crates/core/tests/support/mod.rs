//! Random trees and independent brute-force oracles shared by the property
//! and acceptance suites.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;

use cdss_core::models::{FeatureBox, LeafValue, Node, Predictor, TreeModel, TreeParams};

/// A random classification tree over `n_features` inputs in `[0, 1]`. Every
/// threshold lies strictly inside the box of its node, so no leaf is empty.
pub fn random_tree<R: Rng>(rng: &mut R, n_features: usize, max_depth: usize) -> TreeModel {
    fn grow<R: Rng>(rng: &mut R, nodes: &mut Vec<Node>, b: FeatureBox, depth: usize, max_depth: usize) -> usize {
        let id = nodes.len();
        let split = depth == 0 || (depth < max_depth && rng.random_bool(0.75));
        if !split {
            let p: f64 = rng.random_range(0.0..=1.0);
            nodes.push(Node::Leaf { value: LeafValue::Class(vec![1.0 - p, p]) });
            return id;
        }
        let feature = rng.random_range(0..b.lo.len());
        let lo = b.lo[feature].max(0.0);
        let hi = b.hi[feature].min(1.0);
        let threshold = lo + (hi - lo) * rng.random_range(0.1..0.9);
        nodes.push(Node::Leaf { value: LeafValue::Regression(0.0) });
        let mut lb = b.clone();
        lb.hi[feature] = threshold;
        let mut rb = b;
        rb.lo[feature] = threshold;
        let left = grow(rng, nodes, lb, depth + 1, max_depth);
        let right = grow(rng, nodes, rb, depth + 1, max_depth);
        nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
    let mut nodes = Vec::new();
    grow(rng, &mut nodes, FeatureBox::unbounded(n_features), 0, max_depth);
    TreeModel { nodes, n_features, max_depth, params: TreeParams { max_depth, ..TreeParams::default() } }
}

/// Random tree with at least one leaf on each side of the decision threshold.
pub fn random_two_class_tree<R: Rng>(rng: &mut R, n_features: usize, max_depth: usize) -> TreeModel {
    loop {
        let t = random_tree(rng, n_features, max_depth);
        let outs: Vec<f64> = t.leaf_boxes().iter().map(|(l, _)| t.leaf_output(*l)).collect();
        if outs.iter().any(|&o| o >= 0.5) && outs.iter().any(|&o| o < 0.5) {
            return t;
        }
    }
}

pub fn random_rows<R: Rng>(rng: &mut R, n_rows: usize, n_features: usize) -> Vec<Vec<f64>> {
    (0..n_rows).map(|_| (0..n_features).map(|_| rng.random_range(0.0..1.0)).collect()).collect()
}

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i}")).collect()
}

/// Shapley values by averaging marginal contributions over every ordering of
/// all `n` features, with `v(S)` evaluated directly from the background.
pub fn brute_force_shapley(model: &dyn Predictor, x: &[f64], background: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let n = x.len();
    let mut cache: HashMap<u32, f64> = HashMap::new();
    let mut v = |mask: u32| -> f64 {
        *cache.entry(mask).or_insert_with(|| {
            let total: f64 = background
                .iter()
                .map(|b| {
                    let z: Vec<f64> = (0..n).map(|j| if mask & (1 << j) != 0 { x[j] } else { b[j] }).collect();
                    model.predict(&z)
                })
                .sum();
            total / background.len() as f64
        })
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut phi = vec![0.0; n];
    let mut count = 0usize;
    loop {
        let mut mask = 0u32;
        for &j in &perm {
            let before = v(mask);
            mask |= 1 << j;
            phi[j] += v(mask) - before;
        }
        count += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let base = v(0);
    (base, phi.into_iter().map(|p| p / count as f64).collect())
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else { return false };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("successor exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Smallest L1 distance from `x` to a point of the regular grid over
/// `[0, 1]^n` (spacing `step`) whose model output satisfies `accept`.
pub fn grid_min_distance(model: &TreeModel, x: &[f64], step: f64, accept: impl Fn(f64) -> bool) -> Option<f64> {
    let n = x.len();
    let k = (1.0 / step).round() as usize;
    let axis: Vec<f64> = (0..=k).map(|i| i as f64 * step).collect();
    let mut idx = vec![0usize; n];
    let mut z = vec![0.0; n];
    let mut best: Option<f64> = None;
    loop {
        for j in 0..n {
            z[j] = axis[idx[j]];
        }
        if accept(model.predict(&z)) {
            let d: f64 = z.iter().zip(x).map(|(a, b)| (a - b).abs()).sum();
            if best.is_none_or(|b| d < b) {
                best = Some(d);
            }
        }
        let mut j = 0;
        loop {
            if j == n {
                return best;
            }
            idx[j] += 1;
            if idx[j] <= k {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Columns of a linear-Gaussian chain `a -> b -> c`.
pub fn chain_sem<R: Rng>(rng: &mut R, n: usize) -> Vec<Vec<f64>> {
    let normal = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };
    (0..n)
        .map(|_| {
            let a = normal(rng);
            let b = 0.8 * a + 0.6 * normal(rng);
            let c = 0.8 * b + 0.6 * normal(rng);
            vec![a, b, c]
        })
        .collect()
}

pub const T_VALUES: [f64; 10] = [0.0, 0.1, 0.5, 1.0, 1.5, 2.0, 2.57, 3.0, 3.35, 5.0];
pub const DFS: [f64; 5] = [1.0, 2.0, 5.0, 11.0, 30.0];

/// Two-sided p for each `(t, df)` of `T_VALUES x DFS`, from a 30-digit
/// reference implementation.
pub const P_GRID: [[f64; 5]; 10] = [
    [1.0, 1.0, 1.0, 1.0, 1.0],
    [0.93654896513889286, 0.92946543841414017, 0.92423014115466037, 0.92214359277714621, 0.92100961179027115],
    [0.70483276469913345, 0.66666666666666667, 0.63829887164092901, 0.62692621918384692, 0.62072300488512729],
    [0.5, 0.42264973081037424, 0.36321746764912263, 0.3388006961962017, 0.32530861542602989],
    [0.37433408362199763, 0.27239312489100108, 0.19390368024247343, 0.16175801705545394, 0.144065929128646],
    [0.29516723530086655, 0.18350341907227397, 0.10193947882985836, 0.070803955068034515, 0.054625044962983104],
    [0.23623625841747285, 0.12388682861866717, 0.050035316862067181, 0.026050391372294302, 0.015378847860154685],
    [0.20483276469913345, 0.095465966266709132, 0.030099247897462574, 0.012079839471921367, 0.0053899640656519466],
    [0.18467507682102287, 0.078727687665993966, 0.020328830319008879, 0.0064775894489223809, 0.0021933478639642066],
    [0.12566591637800237, 0.037749551350623726, 0.0041047159800533224, 0.00040252981812451961, 2.3296685467007795e-5],
];
