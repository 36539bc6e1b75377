//! CART regression tree with variance-reduction splits.
//!
//! Pruning "by L levels" truncates the fully grown tree at depth
//! `max(depth_full - L, 1)`; internal nodes at that depth become leaves
//! predicting the mean of their training samples.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::N_FEATURES;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeSettings {
    pub min_leaf: usize,
    pub min_split: usize,
}

impl Default for TreeSettings {
    fn default() -> Self {
        TreeSettings { min_leaf: 3, min_split: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Mean target of the samples reaching this node.
    pub value: f64,
    pub n: usize,
    /// `(feature, threshold, left, right)`; `z[feature] <= threshold` goes left.
    pub split: Option<(usize, f64, usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    /// Arena with the root at index 0.
    pub nodes: Vec<TreeNode>,
}

impl TreeModel {
    pub fn predict(&self, z: &[f64; N_FEATURES]) -> f64 {
        let mut k = 0;
        while let Some((f, thr, l, r)) = self.nodes[k].split {
            k = if z[f] <= thr { l } else { r };
        }
        self.nodes[k].value
    }

    fn depth_from(&self, k: usize) -> usize {
        match self.nodes[k].split {
            None => 0,
            Some((_, _, l, r)) => 1 + self.depth_from(l).max(self.depth_from(r)),
        }
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.depth_from(0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_none()).count()
    }

    /// Copy of the tree cut off at `max_depth`.
    pub fn truncated(&self, max_depth: usize) -> TreeModel {
        let mut out = TreeModel { nodes: Vec::new() };
        self.copy_into(0, 0, max_depth, &mut out.nodes);
        out
    }

    fn copy_into(&self, k: usize, depth: usize, max_depth: usize, out: &mut Vec<TreeNode>) -> usize {
        let node = &self.nodes[k];
        let at = out.len();
        out.push(TreeNode { value: node.value, n: node.n, split: None });
        if let Some((f, thr, l, r)) = node.split {
            if depth < max_depth {
                let nl = self.copy_into(l, depth + 1, max_depth, out);
                let nr = self.copy_into(r, depth + 1, max_depth, out);
                out[at].split = Some((f, thr, nl, nr));
            }
        }
        at
    }
}

struct Grower<'a> {
    z: &'a [[f64; N_FEATURES]],
    y: &'a [f64],
    settings: TreeSettings,
    nodes: Vec<TreeNode>,
}

impl Grower<'_> {
    fn grow(&mut self, idx: &mut [usize]) -> usize {
        let n = idx.len();
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / n as f64;
        let at = self.nodes.len();
        self.nodes.push(TreeNode { value: mean, n, split: None });
        if n < self.settings.min_split {
            return at;
        }
        let Some((f, thr)) = self.best_split(idx) else {
            return at;
        };
        idx.sort_by(|&a, &b| self.z[a][f].total_cmp(&self.z[b][f]).then(a.cmp(&b)));
        let cut = idx.partition_point(|&i| self.z[i][f] <= thr);
        let (left, right) = idx.split_at_mut(cut);
        let l = self.grow(left);
        let r = self.grow(right);
        self.nodes[at].split = Some((f, thr, l, r));
        at
    }

    /// Split maximizing the reduction of the sum of squared errors, first
    /// found wins on ties (features in order, thresholds ascending).
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let total_sq: f64 = idx.iter().map(|&i| self.y[i] * self.y[i]).sum();
        let parent_sse = total_sq - total * total / n as f64;
        let mut best_gain = 1e-12 * parent_sse.max(0.0);
        let mut best = None;
        let mut order: Vec<usize> = idx.to_vec();
        for f in 0..N_FEATURES {
            order.sort_by(|&a, &b| self.z[a][f].total_cmp(&self.z[b][f]).then(a.cmp(&b)));
            let mut sum_l = 0.0;
            let mut sq_l = 0.0;
            for k in 0..n - 1 {
                let yi = self.y[order[k]];
                sum_l += yi;
                sq_l += yi * yi;
                let n_l = k + 1;
                let n_r = n - n_l;
                if n_l < self.settings.min_leaf || n_r < self.settings.min_leaf {
                    continue;
                }
                let (a, b) = (self.z[order[k]][f], self.z[order[k + 1]][f]);
                if a == b {
                    continue;
                }
                let sum_r = total - sum_l;
                let sq_r = total_sq - sq_l;
                let sse = (sq_l - sum_l * sum_l / n_l as f64) + (sq_r - sum_r * sum_r / n_r as f64);
                let gain = parent_sse - sse;
                if gain > best_gain {
                    best_gain = gain;
                    best = Some((f, 0.5 * (a + b)));
                }
            }
        }
        best
    }
}

pub(super) fn fit(
    z: &[[f64; N_FEATURES]],
    y: &[f64],
    settings: &TreeSettings,
    prune_levels: usize,
) -> TreeModel {
    let mut g = Grower { z, y, settings: *settings, nodes: Vec::new() };
    let mut idx: Vec<usize> = (0..z.len()).collect();
    g.grow(&mut idx);
    let full = TreeModel { nodes: g.nodes };
    if prune_levels == 0 {
        return full;
    }
    let depth = full.depth();
    if depth == 0 {
        return full;
    }
    full.truncated(depth.saturating_sub(prune_levels).max(1))
}
