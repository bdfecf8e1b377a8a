//! Shared fixtures for unit tests.

use crate::forest::{DecisionTree, SplitPredicate, TreeNode};

/// Complete binary tree of the given depth with breadth-first ids; internal
/// nodes split column 0 at 0.5.
pub(crate) fn full_binary_tree(depth: usize) -> DecisionTree {
    let n = (1usize << (depth + 1)) - 1;
    let internal = (1usize << depth) - 1;
    let mut nodes = Vec::with_capacity(n);
    for id in 0..n {
        let (split, children) = if id < internal {
            (
                Some(SplitPredicate { column: 0, threshold: 0.5 }),
                Some(((2 * id + 1) as u32, (2 * id + 2) as u32)),
            )
        } else {
            (None, None)
        };
        nodes.push(TreeNode {
            id: id as u32,
            depth: (id + 1).ilog2() as u16,
            split,
            children,
            class_counts: (1, 1),
        });
    }
    DecisionTree { nodes, n_cols: 1 }
}
