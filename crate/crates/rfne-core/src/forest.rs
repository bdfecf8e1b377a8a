//! CART decision trees with Gini impurity, bagging, and feature subsampling.
//!
//! Trees store breadth-first node ids (root 0) and per-node class counts,
//! which the walk, embedding, and rule-decoding stages all key off.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, STREAM_TREE};

/// Axis-aligned split: rows go left iff `value <= threshold`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitPredicate {
    pub column: usize,
    pub threshold: f64,
}

/// One tree node; leaves have neither split nor children.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub id: u32,
    pub depth: u16,
    pub split: Option<SplitPredicate>,
    pub children: Option<(u32, u32)>,
    /// `(n_neg, n_pos)` among training rows reaching this node.
    pub class_counts: (u32, u32),
}

impl TreeNode {
    /// True when the node is a leaf.
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// A fitted CART tree. `nodes[i].id == i`, ids assigned breadth-first.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    /// Training matrix width, checked by `apply_leaf`.
    pub n_cols: usize,
}

impl DecisionTree {
    /// Number of nodes.
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Ids of all leaves in ascending order.
    pub fn leaf_ids(&self) -> Vec<u32> {
        self.nodes.iter().filter(|n| n.is_leaf()).map(|n| n.id).collect()
    }

    /// For each node: `Some((parent id, is_left_child))`, `None` for the root.
    pub fn parents(&self) -> Vec<Option<(u32, bool)>> {
        let mut parents = vec![None; self.nodes.len()];
        for node in &self.nodes {
            if let Some((left, right)) = node.children {
                parents[left as usize] = Some((node.id, true));
                parents[right as usize] = Some((node.id, false));
            }
        }
        parents
    }
}

/// Forest hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForestParams {
    /// Number of trees.
    pub k: usize,
    /// Maximum leaf depth (root depth 0).
    pub max_depth: usize,
    /// Columns examined per split; `None` means `ceil(sqrt(n_cols))`.
    pub features_per_split: Option<usize>,
    /// A node must keep at least `2 * min_samples_leaf` rows to split.
    pub min_samples_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { k: 100, max_depth: 5, features_per_split: None, min_samples_leaf: 1 }
    }
}

/// A bagged ensemble of CART trees.
#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
    pub params: ForestParams,
    pub master_seed: u64,
}

struct Grower<'a> {
    matrix: &'a Matrix,
    labels: &'a [u8],
    max_depth: usize,
    features_per_split: usize,
    min_samples_leaf: usize,
}

struct PendingNode {
    id: u32,
    depth: u16,
    rows: Vec<usize>,
}

impl Grower<'_> {
    fn class_counts(&self, rows: &[usize]) -> (u32, u32) {
        let pos = rows.iter().filter(|&&r| self.labels[r] == 1).count() as u32;
        (rows.len() as u32 - pos, pos)
    }

    /// Best (column, threshold) over a random feature subset, or `None`
    /// when no column in the subset admits a valid split.
    fn best_split(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> Option<SplitPredicate> {
        let n_cols = self.matrix.n_cols();
        let m = self.features_per_split.min(n_cols);
        let mut candidates = sample_distinct(rng, n_cols, m);
        candidates.sort_unstable();

        let n = rows.len();
        let total_pos = rows.iter().filter(|&&r| self.labels[r] == 1).count();
        let total_neg = n - total_pos;

        let mut best: Option<(f64, SplitPredicate)> = None;
        let mut values: Vec<(f64, u8)> = Vec::with_capacity(n);
        for col in candidates {
            values.clear();
            values.extend(rows.iter().map(|&r| (self.matrix.get(r, col), self.labels[r])));
            values.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

            let mut left_pos = usize::from(values[0].1 == 1);
            let mut left_n = 1usize;
            for i in 1..n {
                let (prev, cur) = (values[i - 1].0, values[i].0);
                if cur > prev
                    && left_n >= self.min_samples_leaf
                    && n - left_n >= self.min_samples_leaf
                {
                    let left_neg = left_n - left_pos;
                    let right_pos = total_pos - left_pos;
                    let right_neg = total_neg - left_neg;
                    let score = weighted_gini(
                        left_neg as f64,
                        left_pos as f64,
                        right_neg as f64,
                        right_pos as f64,
                    );
                    if best.as_ref().map_or(true, |(b, _)| score < *b) {
                        best = Some((
                            score,
                            SplitPredicate { column: col, threshold: (prev + cur) / 2.0 },
                        ));
                    }
                }
                left_pos += usize::from(values[i].1 == 1);
                left_n += 1;
            }
        }
        best.map(|(_, split)| split)
    }
}

/// Samples `m` distinct values from `0..n` (Floyd's algorithm).
fn sample_distinct(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(m);
    for j in n - m..n {
        let t = rng.gen_range(0..=j);
        if chosen.contains(&t) {
            chosen.push(j);
        } else {
            chosen.push(t);
        }
    }
    chosen
}

fn weighted_gini(left_neg: f64, left_pos: f64, right_neg: f64, right_pos: f64) -> f64 {
    let gini = |neg: f64, pos: f64| {
        let n = neg + pos;
        if n == 0.0 {
            0.0
        } else {
            1.0 - (neg * neg + pos * pos) / (n * n)
        }
    };
    let (nl, nr) = (left_neg + left_pos, right_neg + right_pos);
    let n = nl + nr;
    (nl * gini(left_neg, left_pos) + nr * gini(right_neg, right_pos)) / n
}

/// Grows one CART tree on the given bag of row indices.
pub fn fit_tree(
    matrix: &Matrix,
    labels: &[u8],
    bag: &[usize],
    max_depth: usize,
    features_per_split: usize,
    min_samples_leaf: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DecisionTree> {
    if bag.is_empty() {
        return Err(Error::data("cannot fit a tree on an empty sample".to_string()));
    }
    if features_per_split == 0 {
        return Err(Error::config("features_per_split must be at least 1".to_string()));
    }
    let grower = Grower { matrix, labels, max_depth, features_per_split, min_samples_leaf };

    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(PendingNode { id: 0, depth: 0, rows: bag.to_vec() });
    let mut next_id: u32 = 1;

    while let Some(PendingNode { id, depth, rows }) = queue.pop_front() {
        let class_counts = grower.class_counts(&rows);
        let pure = class_counts.0 == 0 || class_counts.1 == 0;
        let too_small = rows.len() < 2 * grower.min_samples_leaf;
        let at_depth = depth as usize >= grower.max_depth;

        let split = if pure || too_small || at_depth {
            None
        } else {
            grower.best_split(&rows, rng)
        };

        match split {
            Some(split) => {
                let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
                for &r in &rows {
                    if matrix.get(r, split.column) <= split.threshold {
                        left_rows.push(r);
                    } else {
                        right_rows.push(r);
                    }
                }
                let (left_id, right_id) = (next_id, next_id + 1);
                next_id += 2;
                nodes.push(TreeNode {
                    id,
                    depth,
                    split: Some(split),
                    children: Some((left_id, right_id)),
                    class_counts,
                });
                queue.push_back(PendingNode { id: left_id, depth: depth + 1, rows: left_rows });
                queue.push_back(PendingNode { id: right_id, depth: depth + 1, rows: right_rows });
            }
            None => {
                nodes.push(TreeNode { id, depth, split: None, children: None, class_counts });
            }
        }
    }

    Ok(DecisionTree { nodes, n_cols: matrix.n_cols() })
}

/// Fits `k` trees on bootstrap resamples. Per-tree RNGs derive from
/// `(master_seed, tree index)`, so results are identical for any worker count.
pub fn fit_forest(
    matrix: &Matrix,
    labels: &[u8],
    params: &ForestParams,
    master_seed: u64,
) -> Result<Forest> {
    if params.k == 0 {
        return Err(Error::config("forest needs at least one tree".to_string()));
    }
    let n = matrix.n_rows();
    if n == 0 {
        return Err(Error::data("cannot fit a forest on an empty dataset".to_string()));
    }
    if labels.len() != n {
        return Err(Error::data(format!(
            "matrix has {n} rows but {} labels supplied",
            labels.len()
        )));
    }
    let features_per_split = params
        .features_per_split
        .unwrap_or_else(|| (matrix.n_cols() as f64).sqrt().ceil() as usize)
        .max(1);

    let trees: Result<Vec<DecisionTree>> = (0..params.k)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::rng_for(master_seed, STREAM_TREE, i as u64);
            let bag: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            fit_tree(
                matrix,
                labels,
                &bag,
                params.max_depth,
                features_per_split,
                params.min_samples_leaf,
                &mut rng,
            )
        })
        .collect();

    Ok(Forest { trees: trees?, params: params.clone(), master_seed })
}

/// Routes a row to its leaf and returns the leaf id.
pub fn apply_leaf(tree: &DecisionTree, row: &[f64]) -> Result<u32> {
    if row.len() != tree.n_cols {
        return Err(Error::data(format!(
            "row width {} does not match training width {}",
            row.len(),
            tree.n_cols
        )));
    }
    let mut node = &tree.nodes[0];
    while let (Some(split), Some((left, right))) = (&node.split, node.children) {
        let next = if row[split.column] <= split.threshold { left } else { right };
        node = &tree.nodes[next as usize];
    }
    Ok(node.id)
}

/// Majority vote over the forest: per-tree vote is the argmax of leaf class
/// counts (ties to class 0); returns the class (forest ties to class 0) and
/// the fraction of positive votes.
pub fn predict_majority(forest: &Forest, row: &[f64]) -> Result<(u8, f64)> {
    let mut positive_votes = 0usize;
    for tree in &forest.trees {
        let leaf = apply_leaf(tree, row)?;
        let (neg, pos) = tree.nodes[leaf as usize].class_counts;
        if pos > neg {
            positive_votes += 1;
        }
    }
    let k = forest.trees.len();
    let class = u8::from(2 * positive_votes > k);
    Ok((class, positive_votes as f64 / k as f64))
}

/// Mean positive-class probability over the forest's leaves: each tree
/// contributes `n_pos / (n_neg + n_pos)` of the leaf the row lands in.
pub fn predict_proba(forest: &Forest, row: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    for tree in &forest.trees {
        let leaf = apply_leaf(tree, row)?;
        let (neg, pos) = tree.nodes[leaf as usize].class_counts;
        sum += pos as f64 / (neg + pos) as f64;
    }
    Ok(sum / forest.trees.len() as f64)
}
