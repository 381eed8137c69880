//! Regression forest trained with variance-reduction splits, plus an exact
//! coalition-value table used by the attribution engine.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result, Stage};
use crate::scalar::Real;
use crate::seeding;

const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone, serde::Serialize)]
struct Node<R> {
    feature: u32,
    threshold: R,
    left: u32,
    right: u32,
    value: R,
}

impl<R: Real> Node<R> {
    fn leaf(value: R) -> Self {
        Node {
            feature: 0,
            threshold: R::zero(),
            left: NO_CHILD,
            right: NO_CHILD,
            value,
        }
    }

    #[inline]
    fn is_leaf(&self) -> bool {
        self.left == NO_CHILD
    }
}

#[derive(Debug, Clone, serde::Serialize)]
struct Tree<R> {
    nodes: Vec<Node<R>>,
}

impl<R: Real> Tree<R> {
    #[inline]
    fn predict(&self, x: &[R]) -> R {
        let mut idx = 0usize;
        loop {
            let node = &self.nodes[idx];
            if node.is_leaf() {
                return node.value;
            }
            idx = if x[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }
}

/// Training hyperparameters of the forest.
#[derive(Debug, Clone)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub bootstrap: bool,
    /// Candidate dimensions per split; defaults to ceil(k/3).
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            min_leaf: 3,
            bootstrap: true,
            mtry: None,
            seed: 0,
        }
    }
}

/// Bagged ensemble of variance-reduction regression trees. Predictions are
/// leaf means averaged over trees, so they can never leave the observed
/// target range.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RegressionForest<R> {
    trees: Vec<Tree<R>>,
    pub n_dims: usize,
}

impl<R: Real> RegressionForest<R> {
    /// Grow a forest. Per-tree seeds are derived from `(cfg.seed, tree index)`
    /// so parallel training is deterministic.
    pub fn fit(rows: &[Vec<R>], targets: &[R], cfg: &ForestConfig) -> Result<Self> {
        if rows.is_empty() || rows.len() != targets.len() {
            return Err(Error::validation(Stage::Surrogate, "rows/targets length mismatch or empty"));
        }
        let n_dims = rows[0].len();
        if n_dims == 0 || rows.iter().any(|r| r.len() != n_dims) {
            return Err(Error::validation(Stage::Surrogate, "ragged or zero-width rows"));
        }
        if cfg.n_trees == 0 || cfg.min_leaf == 0 {
            return Err(Error::validation(Stage::Surrogate, "n_trees and min_leaf must be >= 1"));
        }
        let mtry = cfg.mtry.unwrap_or_else(|| n_dims.div_ceil(3)).clamp(1, n_dims);
        let trees: Vec<Tree<R>> = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seeding::stream(cfg.seed, "tree", t as u64);
                let indices: Vec<usize> = if cfg.bootstrap {
                    (0..rows.len()).map(|_| rng.random_range(0..rows.len())).collect()
                } else {
                    (0..rows.len()).collect()
                };
                grow_tree(rows, targets, indices, cfg.min_leaf, mtry, &mut rng)
            })
            .collect();
        Ok(RegressionForest { trees, n_dims })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn predict(&self, x: &[R]) -> Result<R> {
        if x.len() != self.n_dims {
            return Err(Error::validation(
                Stage::Surrogate,
                format!("input has {} dims, forest expects {}", x.len(), self.n_dims),
            ));
        }
        Ok(self.predict_unchecked(x))
    }

    #[inline]
    pub fn predict_unchecked(&self, x: &[R]) -> R {
        // Translated mean: exact when all trees agree (constant targets).
        let first = self.trees[0].predict(x);
        let mut s = R::zero();
        for tree in &self.trees[1..] {
            s = s + (tree.predict(x) - first);
        }
        first + s / R::from_usize_lossy(self.trees.len())
    }

    /// Exact interventional coalition-value table.
    ///
    /// Entry `m` is the mean prediction over background rows of the hybrid
    /// point that takes `target` values on dimensions where bit `d` of `m` is
    /// set and the background row's values elsewhere. Computed per (tree,
    /// background row) by descending the tree once and splitting the mask
    /// space only where target and background fall on different sides of a
    /// split, which is exactly equivalent to (and much cheaper than)
    /// evaluating all `2^k * B` hybrids. Leaf contributions accumulate into a
    /// 3^k array keyed by per-dimension state (free / pinned-to-background /
    /// pinned-to-target) so each leaf costs O(1); the mask expansion happens
    /// once at the end.
    pub fn coalition_table(&self, target: &[R], background: &[Vec<R>]) -> Result<Vec<R>> {
        let k = self.n_dims;
        if target.len() != k || background.iter().any(|b| b.len() != k) {
            return Err(Error::validation(Stage::Attribution, "dimension mismatch in coalition table"));
        }
        if k > 15 {
            return Err(Error::validation(
                Stage::Attribution,
                format!("coalition enumeration supports k <= 15, got {}", k),
            ));
        }
        if background.is_empty() {
            return Err(Error::validation(Stage::Attribution, "background set is empty"));
        }
        let mut pow3 = vec![1usize; k + 1];
        for d in 1..=k {
            pow3[d] = pow3[d - 1] * 3;
        }
        let mut cells = vec![R::zero(); pow3[k]];
        let mut scratch: Vec<u32> = (0..background.len() as u32).collect();
        for tree in &self.trees {
            accumulate_tree_cells(&tree.nodes, 0, target, background, &mut scratch, 0, &pow3, &mut cells);
        }

        let size = 1usize << k;
        let full = (size - 1) as u16;
        let mut table = vec![R::zero(); size];
        for (cell, &value) in cells.iter().enumerate() {
            if value == R::zero() {
                continue;
            }
            let mut pinned: u16 = 0;
            let mut values_mask: u16 = 0;
            let mut rest = cell;
            for d in 0..k {
                match rest % 3 {
                    1 => pinned |= 1 << d,
                    2 => {
                        pinned |= 1 << d;
                        values_mask |= 1 << d;
                    }
                    _ => {}
                }
                rest /= 3;
            }
            let free = full & !pinned;
            let mut sub = free;
            loop {
                let idx = (values_mask | sub) as usize;
                table[idx] = table[idx] + value;
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & free;
            }
        }

        let scale = R::from_usize_lossy(self.trees.len()) * R::from_usize_lossy(background.len());
        for v in &mut table {
            *v = *v / scale;
        }
        Ok(table)
    }

}

impl<R: Real + serde::Serialize> RegressionForest<R> {
    /// Debug dump of the tree list (not a stability-guaranteed format).
    pub fn to_debug_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("forest serializes")
    }
}

/// Descend one tree for the whole background set at once, accumulating leaf
/// values (times the rows reaching them) into the 3^k cell array. `cell`
/// encodes per-dimension state as a trit: 0 free, 1 pinned to the background
/// side, 2 pinned to the target side. Row sets are partitioned at splits
/// whose dimension is free or background-pinned, so the upper tree is walked
/// once instead of once per background row.
fn accumulate_tree_cells<R: Real>(
    nodes: &[Node<R>],
    idx: usize,
    target: &[R],
    background: &[Vec<R>],
    rows: &mut [u32],
    cell: usize,
    pow3: &[usize],
    cells: &mut [R],
) {
    let node = &nodes[idx];
    if node.is_leaf() {
        cells[cell] = cells[cell] + node.value * R::from_usize_lossy(rows.len());
        return;
    }
    let d = node.feature as usize;
    let target_left = target[d] <= node.threshold;
    let child = |left: bool| if left { node.left as usize } else { node.right as usize };
    match (cell / pow3[d]) % 3 {
        2 => accumulate_tree_cells(nodes, child(target_left), target, background, rows, cell, pow3, cells),
        1 => {
            let split = partition_rows(rows, |i| background[i][d] <= node.threshold);
            let (left, right) = rows.split_at_mut(split);
            if !left.is_empty() {
                accumulate_tree_cells(nodes, node.left as usize, target, background, left, cell, pow3, cells);
            }
            if !right.is_empty() {
                accumulate_tree_cells(nodes, node.right as usize, target, background, right, cell, pow3, cells);
            }
        }
        _ => {
            let split = partition_rows(rows, |i| (background[i][d] <= node.threshold) == target_left);
            let (same, opposite) = rows.split_at_mut(split);
            if !same.is_empty() {
                accumulate_tree_cells(nodes, child(target_left), target, background, same, cell, pow3, cells);
            }
            if !opposite.is_empty() {
                // Both pinned directions reuse the same range: recursion may
                // permute it, but the set of rows in the range is unchanged.
                accumulate_tree_cells(nodes, child(target_left), target, background, opposite, cell + 2 * pow3[d], pow3, cells);
                accumulate_tree_cells(nodes, child(!target_left), target, background, opposite, cell + pow3[d], pow3, cells);
            }
        }
    }
}

/// Move rows satisfying the predicate to the front; returns their count.
#[inline]
fn partition_rows(rows: &mut [u32], pred: impl Fn(usize) -> bool) -> usize {
    let mut at = 0;
    for j in 0..rows.len() {
        if pred(rows[j] as usize) {
            rows.swap(at, j);
            at += 1;
        }
    }
    at
}

fn grow_tree<R: Real>(
    rows: &[Vec<R>],
    targets: &[R],
    indices: Vec<usize>,
    min_leaf: usize,
    mtry: usize,
    rng: &mut impl Rng,
) -> Tree<R> {
    let mut nodes = Vec::new();
    build_node(rows, targets, indices, min_leaf, mtry, rng, &mut nodes);
    Tree { nodes }
}

fn node_mean<R: Real>(targets: &[R], indices: &[usize]) -> R {
    // Translated mean: exact for constant nodes.
    let first = targets[indices[0]];
    let mut s = R::zero();
    for &i in &indices[1..] {
        s = s + (targets[i] - first);
    }
    first + s / R::from_usize_lossy(indices.len())
}

/// Build the subtree over `indices`; returns its node index.
fn build_node<R: Real>(
    rows: &[Vec<R>],
    targets: &[R],
    indices: Vec<usize>,
    min_leaf: usize,
    mtry: usize,
    rng: &mut impl Rng,
    nodes: &mut Vec<Node<R>>,
) -> u32 {
    let mean = node_mean(targets, &indices);
    let first = targets[indices[0]];
    let pure = indices.iter().all(|&i| targets[i] == first);
    if pure || indices.len() < 2 * min_leaf {
        nodes.push(Node::leaf(if pure { first } else { mean }));
        return (nodes.len() - 1) as u32;
    }

    let k = rows[0].len();
    // Partial Fisher-Yates draw of mtry candidate dimensions.
    let mut dims: Vec<usize> = (0..k).collect();
    for i in 0..mtry {
        let j = rng.random_range(i..k);
        dims.swap(i, j);
    }
    dims.truncate(mtry);

    let mut best: Option<(R, usize, R)> = None; // (children SSE, dim, threshold)
    let mut sorted: Vec<(R, R)> = Vec::with_capacity(indices.len());
    for &d in &dims {
        sorted.clear();
        sorted.extend(indices.iter().map(|&i| (rows[i][d], targets[i])));
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));

        let mut sum_left = R::zero();
        let mut sq_left = R::zero();
        let mut sum_right = R::zero();
        let mut sq_right = R::zero();
        for &(_, y) in sorted.iter() {
            sum_right = sum_right + y;
            sq_right = sq_right + y * y;
        }
        let n = sorted.len();
        for t in 0..n - 1 {
            let y = sorted[t].1;
            sum_left = sum_left + y;
            sq_left = sq_left + y * y;
            sum_right = sum_right - y;
            sq_right = sq_right - y * y;
            if sorted[t].0 == sorted[t + 1].0 {
                continue;
            }
            let nl = t + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let sse = (sq_left - sum_left * sum_left / R::from_usize_lossy(nl))
                + (sq_right - sum_right * sum_right / R::from_usize_lossy(nr));
            let two = R::from_f64_lossy(2.0);
            let threshold = (sorted[t].0 + sorted[t + 1].0) / two;
            if best.as_ref().is_none_or(|(b, _, _)| sse < *b) {
                best = Some((sse, d, threshold));
            }
        }
    }

    let Some((_, dim, threshold)) = best else {
        nodes.push(Node::leaf(mean));
        return (nodes.len() - 1) as u32;
    };

    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
        indices.iter().partition(|&&i| rows[i][dim] <= threshold);

    let slot = nodes.len();
    nodes.push(Node::leaf(mean)); // placeholder, patched below
    let left = build_node(rows, targets, left_idx, min_leaf, mtry, rng, nodes);
    let right = build_node(rows, targets, right_idx, min_leaf, mtry, rng, nodes);
    nodes[slot] = Node {
        feature: dim as u32,
        threshold,
        left,
        right,
        value: mean,
    };
    slot as u32
}
