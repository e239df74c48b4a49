//! Depth-2 decision trees over quantized features.

use alloc::vec;
use alloc::vec::Vec;

use super::quantize::{BinEdges, QuantizedMatrix};

/// Internal node: samples with `value < threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeNode {
    pub feature: u32,
    pub threshold: f32,
}

/// Root (`nodes[0]`), left child (`nodes[1]`), right child (`nodes[2]`) and
/// four leaves ordered left-left, left-right, right-left, right-right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthTwoTree {
    pub nodes: [TreeNode; 3],
    pub leaves: [f32; 4],
}

impl DepthTwoTree {
    /// Leaf reached by the sample; `value(node)` reads the feature tested at
    /// internal node `node` (0 = root). Exactly two nodes are visited.
    #[inline(always)]
    pub fn leaf_index(&self, mut value: impl FnMut(usize) -> f32) -> usize {
        let child = if value(0) < self.nodes[0].threshold { 1 } else { 2 };
        let right = value(child) >= self.nodes[child].threshold;
        (child - 1) * 2 + right as usize
    }

    #[inline]
    pub fn predict(&self, features: &[f32]) -> f32 {
        self.leaves[self.leaf_index(|n| features[self.nodes[n].feature as usize])]
    }

    pub fn max_feature(&self) -> u32 {
        self.nodes.iter().map(|n| n.feature).max().unwrap_or(0)
    }
}

/// A split in bin space: bins `<= bin` go left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinSplit {
    pub feature: usize,
    pub bin: usize,
    /// Weighted error with majority-vote leaves.
    pub error: f64,
    pub left: f32,
    pub right: f32,
}

/// Result of fitting one tree.
#[derive(Debug, Clone)]
pub struct FittedTree {
    pub tree: DepthTwoTree,
    /// Weighted training error divided by the total weight.
    pub error: f64,
    /// Tree output (`±1`) for every training sample.
    pub predictions: Vec<i8>,
}

#[inline]
fn majority(pos: f64, neg: f64) -> f32 {
    if pos > neg {
        1.0
    } else {
        -1.0
    }
}

/// Best stump over `subset`, minimizing weighted error; ties go to the lowest
/// feature index, then the lowest bin. Returns `None` for empty or pure
/// subsets.
pub fn best_split(
    q: &QuantizedMatrix,
    bins: usize,
    labels: &[i8],
    weights: &[f64],
    subset: Option<&[u32]>,
) -> Option<BinSplit> {
    let (mut total_pos, mut total_neg) = (0.0f64, 0.0f64);
    let mut tally = |i: usize| {
        if labels[i] > 0 {
            total_pos += weights[i];
        } else {
            total_neg += weights[i];
        }
    };
    match subset {
        Some(s) => s.iter().for_each(|&i| tally(i as usize)),
        None => (0..q.n_samples).for_each(tally),
    }
    if total_pos <= 0.0 || total_neg <= 0.0 {
        return None;
    }

    // signed weights: index 2*b for negatives, 2*b+1 for positives
    let class: Vec<usize> = labels.iter().map(|&l| (l > 0) as usize).collect();
    let mut hist = vec![0.0f64; 2 * bins];
    let mut best: Option<BinSplit> = None;
    for f in 0..q.n_features {
        hist.fill(0.0);
        let col = q.column(f);
        match subset {
            Some(s) => {
                for &i in s {
                    let i = i as usize;
                    hist[2 * col[i] as usize + class[i]] += weights[i];
                }
            }
            None => {
                for (i, &b) in col.iter().enumerate() {
                    hist[2 * b as usize + class[i]] += weights[i];
                }
            }
        }
        let (mut lp, mut ln) = (0.0f64, 0.0f64);
        for k in 0..bins - 1 {
            ln += hist[2 * k];
            lp += hist[2 * k + 1];
            let (rp, rn) = (total_pos - lp, total_neg - ln);
            let err = lp.min(ln) + rp.min(rn).max(0.0);
            if best.is_none_or(|b| err < b.error) {
                best = Some(BinSplit {
                    feature: f,
                    bin: k,
                    error: err,
                    left: majority(lp, ln),
                    right: majority(rp, rn),
                });
            }
        }
    }
    best
}

/// Fits a depth-2 tree greedily: the root is the best stump on all samples,
/// each child the best stump on the samples routed to it. Children of pure
/// or empty subsets send everything left and output the subset's class.
pub fn train_depth2_tree(
    q: &QuantizedMatrix,
    edges: &BinEdges,
    labels: &[i8],
    weights: &[f64],
) -> FittedTree {
    train_depth2_tree_on(q, edges, labels, weights, None)
}

/// [`train_depth2_tree`] fitted on `subset` only; predictions and the error
/// still cover every sample.
pub fn train_depth2_tree_on(
    q: &QuantizedMatrix,
    edges: &BinEdges,
    labels: &[i8],
    weights: &[f64],
    subset: Option<&[u32]>,
) -> FittedTree {
    let n = q.n_samples;
    assert_eq!(labels.len(), n);
    assert_eq!(weights.len(), n);
    let bins = edges.bins;

    let constant = |subset: &[u32], fallback: f32| -> BinSplit {
        let pos: f64 = subset.iter().filter(|&&i| labels[i as usize] > 0).map(|&i| weights[i as usize]).sum();
        let neg: f64 = subset.iter().filter(|&&i| labels[i as usize] <= 0).map(|&i| weights[i as usize]).sum();
        let c = if subset.is_empty() { fallback } else { majority(pos, neg) };
        BinSplit {
            feature: 0,
            bin: bins - 1,
            error: pos.min(neg),
            left: c,
            right: c,
        }
    };
    let all: Vec<u32>;
    let members: &[u32] = match subset {
        Some(s) => s,
        None => {
            all = (0..n as u32).collect();
            &all
        }
    };
    let root = best_split(q, bins, labels, weights, subset).unwrap_or_else(|| constant(members, -1.0));
    let root_col = q.column(root.feature);
    let (left_idx, right_idx): (Vec<u32>, Vec<u32>) =
        members.iter().partition(|&&i| root_col[i as usize] as usize <= root.bin);

    let child = |subset: &[u32], fallback: f32| -> BinSplit {
        best_split(q, bins, labels, weights, Some(subset)).unwrap_or_else(|| constant(subset, fallback))
    };
    let left = child(&left_idx, root.left);
    let right = child(&right_idx, root.right);

    let node = |s: &BinSplit| TreeNode {
        feature: s.feature as u32,
        threshold: edges.threshold(s.feature, s.bin),
    };
    let tree = DepthTwoTree {
        nodes: [node(&root), node(&left), node(&right)],
        leaves: [left.left, left.right, right.left, right.right],
    };

    let mut predictions = vec![0i8; n];
    let mut wrong = 0.0f64;
    let mut total = 0.0f64;
    for i in 0..n {
        let s = if q.get(i, root.feature) as usize <= root.bin { &left } else { &right };
        let out = if q.get(i, s.feature) as usize <= s.bin { s.left } else { s.right };
        let p = if out > 0.0 { 1 } else { -1 };
        predictions[i] = p;
        total += weights[i];
        if p != labels[i] {
            wrong += weights[i];
        }
    }
    FittedTree {
        tree,
        error: if total > 0.0 { wrong / total } else { 0.0 },
        predictions,
    }
}
