//! Tree-to-graph conversion and second-order biased random walks.
//!
//! Walk transitions follow the node2vec scheme: from the current node, a
//! neighbor is drawn with weight 1/p when it is the previous node, 1 when it
//! is at distance 1 from the previous node, and 1/q when it is at distance 2.
//! Each walk's RNG derives from `(seed, start node, repetition)`, so the
//! corpus is identical for any worker count.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forest::DecisionTree;
use crate::rng;

/// Undirected graph over tree nodes; adjacency lists are sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeGraph {
    pub adjacency: Vec<Vec<u32>>,
}

impl TreeGraph {
    /// Number of nodes.
    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    /// Number of undirected edges.
    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(|a| a.len()).sum::<usize>() / 2
    }

    fn has_edge(&self, u: u32, v: u32) -> bool {
        self.adjacency[u as usize].binary_search(&v).is_ok()
    }
}

/// Random-walk parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkParams {
    /// Walk length in nodes.
    pub l: usize,
    /// Walks started per node.
    pub r: usize,
    /// Return parameter: weight 1/p for stepping back to the previous node.
    pub p: f64,
    /// In-out parameter: weight 1/q for stepping to distance 2.
    pub q: f64,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams { l: 80, r: 10, p: 1.0, q: 1.0 }
    }
}

impl WalkParams {
    fn validate(&self) -> Result<()> {
        if self.l < 1 {
            return Err(Error::config("walk length must be at least 1".to_string()));
        }
        if self.r < 1 {
            return Err(Error::config("walks per node must be at least 1".to_string()));
        }
        if !(self.p > 0.0) || !(self.q > 0.0) {
            return Err(Error::config(format!(
                "walk parameters p and q must be positive, got p={} q={}",
                self.p, self.q
            )));
        }
        Ok(())
    }
}

/// Corpus of node-id walks.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkCorpus {
    pub walks: Vec<Vec<u32>>,
}

/// Converts a fitted tree into an undirected graph with one node per tree
/// node and parent-child edges only.
pub fn tree_to_graph(tree: &DecisionTree) -> TreeGraph {
    let mut adjacency = vec![Vec::new(); tree.n_nodes()];
    for node in &tree.nodes {
        if let Some((left, right)) = node.children {
            adjacency[node.id as usize].push(left);
            adjacency[node.id as usize].push(right);
            adjacency[left as usize].push(node.id);
            adjacency[right as usize].push(node.id);
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    TreeGraph { adjacency }
}

/// Generates `r` walks from every node.
pub fn generate_walks(graph: &TreeGraph, params: &WalkParams, seed: u64) -> Result<WalkCorpus> {
    params.validate()?;
    if graph.n_nodes() == 0 {
        return Err(Error::data("cannot walk an empty graph".to_string()));
    }
    let walks: Vec<Vec<u32>> = (0..graph.n_nodes() as u32)
        .into_par_iter()
        .flat_map_iter(|start| {
            (0..params.r).map(move |rep| (start, rep))
        })
        .map(|(start, rep)| single_walk(graph, params, seed, start, rep))
        .collect();
    Ok(WalkCorpus { walks })
}

fn single_walk(graph: &TreeGraph, params: &WalkParams, seed: u64, start: u32, rep: usize) -> Vec<u32> {
    let mut rng = rng::rng_for(seed, u64::from(start), rep as u64);
    let mut walk = Vec::with_capacity(params.l);
    walk.push(start);
    let neighbors = &graph.adjacency[start as usize];
    if neighbors.is_empty() || params.l == 1 {
        return walk;
    }

    let mut prev = start;
    let mut cur = neighbors[rng.gen_range(0..neighbors.len())];
    walk.push(cur);

    let mut weights: Vec<f64> = Vec::new();
    while walk.len() < params.l {
        let candidates = &graph.adjacency[cur as usize];
        weights.clear();
        let mut total = 0.0;
        for &x in candidates {
            let w = if x == prev {
                1.0 / params.p
            } else if graph.has_edge(x, prev) {
                1.0
            } else {
                1.0 / params.q
            };
            total += w;
            weights.push(w);
        }
        let mut u = rng.gen::<f64>() * total;
        let mut chosen = candidates[candidates.len() - 1];
        for (i, &w) in weights.iter().enumerate() {
            u -= w;
            if u < 0.0 {
                chosen = candidates[i];
                break;
            }
        }
        walk.push(chosen);
        prev = cur;
        cur = chosen;
    }
    walk
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::full_binary_tree;
    use proptest::prelude::*;

    fn path_graph(n: usize) -> TreeGraph {
        let mut adjacency = vec![Vec::new(); n];
        for i in 0..n - 1 {
            adjacency[i].push(i as u32 + 1);
            adjacency[i + 1].push(i as u32);
        }
        TreeGraph { adjacency }
    }

    #[test]
    fn single_leaf_tree_graph() {
        let tree = full_binary_tree(0);
        let graph = tree_to_graph(&tree);
        assert_eq!(graph.n_nodes(), 1);
        assert_eq!(graph.n_edges(), 0);
        let corpus =
            generate_walks(&graph, &WalkParams { l: 10, r: 3, p: 1.0, q: 1.0 }, 0).unwrap();
        assert_eq!(corpus.walks, vec![vec![0]; 3]);
    }

    #[test]
    fn depth_two_tree_counts() {
        let graph = tree_to_graph(&full_binary_tree(2));
        assert_eq!(graph.n_nodes(), 7);
        assert_eq!(graph.n_edges(), 6);
    }

    #[test]
    fn walk_count_contract() {
        let graph = tree_to_graph(&full_binary_tree(5));
        assert_eq!(graph.n_nodes(), 63);
        let corpus =
            generate_walks(&graph, &WalkParams { l: 5, r: 50, p: 1.0, q: 1.0 }, 7).unwrap();
        assert_eq!(corpus.walks.len(), 3150);
        // Every node starts exactly r walks.
        for node in 0..63u32 {
            let starts = corpus.walks.iter().filter(|w| w[0] == node).count();
            assert_eq!(starts, 50);
        }
    }

    #[test]
    fn graph_is_connected_and_acyclic() {
        let tree = full_binary_tree(4);
        let graph = tree_to_graph(&tree);
        // Union-find: adding n-1 edges without a cycle and ending with one
        // component proves the graph is a tree.
        let n = graph.n_nodes();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, x: usize) -> usize {
            if parent[x] != x {
                let root = find(parent, parent[x]);
                parent[x] = root;
            }
            parent[x]
        }
        let mut edges = 0;
        for (u, list) in graph.adjacency.iter().enumerate() {
            for &v in list {
                let v = v as usize;
                if u < v {
                    edges += 1;
                    let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
                    assert_ne!(ru, rv, "cycle through edge ({u}, {v})");
                    parent[ru] = rv;
                }
            }
        }
        assert_eq!(edges, n - 1);
        let root = find(&mut parent, 0);
        for x in 0..n {
            assert_eq!(find(&mut parent, x), root);
        }
    }

    #[test]
    fn symmetric_adjacency() {
        let graph = tree_to_graph(&full_binary_tree(3));
        for (u, list) in graph.adjacency.iter().enumerate() {
            for &v in list {
                assert!(graph.has_edge(v, u as u32));
            }
        }
    }

    #[test]
    fn first_step_is_uniform_on_path() {
        let graph = path_graph(3);
        let corpus =
            generate_walks(&graph, &WalkParams { l: 2, r: 40_000, p: 1.0, q: 1.0 }, 11).unwrap();
        let from_mid: Vec<&Vec<u32>> = corpus.walks.iter().filter(|w| w[0] == 1).collect();
        assert_eq!(from_mid.len(), 40_000);
        let to_zero = from_mid.iter().filter(|w| w[1] == 0).count() as f64 / 40_000.0;
        assert!((to_zero - 0.5).abs() < 0.02, "P(1 -> 0) = {to_zero}");
    }

    #[test]
    fn return_and_inout_weights_shape_transitions() {
        // Path 0-1-2, walks [0, 1, x]: the previous node is 0, so node 0
        // carries weight 1/p and node 2 (distance 2) carries 1/q.
        let graph = path_graph(3);
        let params = WalkParams { l: 3, r: 50_000, p: 2.0, q: 0.5 };
        let corpus = generate_walks(&graph, &params, 13).unwrap();
        let from_zero: Vec<&Vec<u32>> = corpus.walks.iter().filter(|w| w[0] == 0).collect();
        let back = from_zero.iter().filter(|w| w[2] == 0).count() as f64 / from_zero.len() as f64;
        let expected = (1.0 / params.p) / (1.0 / params.p + 1.0 / params.q);
        assert!((back - expected).abs() < 0.02, "P(return) = {back}, expected {expected}");
    }

    #[test]
    fn distance_one_neighbors_weigh_one() {
        // Triangle: from walk [0, 1, x], node 2 is adjacent to the previous
        // node 0, so it carries weight 1 against 1/p for returning.
        let graph = TreeGraph {
            adjacency: vec![vec![1, 2], vec![0, 2], vec![0, 1]],
        };
        let params = WalkParams { l: 3, r: 50_000, p: 4.0, q: 1.0 };
        let corpus = generate_walks(&graph, &params, 17).unwrap();
        let via_one: Vec<&Vec<u32>> =
            corpus.walks.iter().filter(|w| w[0] == 0 && w[1] == 1).collect();
        let back = via_one.iter().filter(|w| w[2] == 0).count() as f64 / via_one.len() as f64;
        let expected = 0.25 / (0.25 + 1.0);
        assert!((back - expected).abs() < 0.02, "P(return) = {back}, expected {expected}");
    }

    #[test]
    fn rejects_bad_params() {
        let graph = path_graph(2);
        assert!(generate_walks(&graph, &WalkParams { l: 0, r: 1, p: 1.0, q: 1.0 }, 0).is_err());
        assert!(generate_walks(&graph, &WalkParams { l: 5, r: 0, p: 1.0, q: 1.0 }, 0).is_err());
        assert!(generate_walks(&graph, &WalkParams { l: 5, r: 1, p: 0.0, q: 1.0 }, 0).is_err());
        assert!(generate_walks(&graph, &WalkParams { l: 5, r: 1, p: 1.0, q: -1.0 }, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn walks_respect_edges_and_length(seed in 0u64..200, depth in 1usize..5) {
            let graph = tree_to_graph(&full_binary_tree(depth));
            let params = WalkParams { l: 12, r: 3, p: 1.5, q: 0.7 };
            let corpus = generate_walks(&graph, &params, seed).unwrap();
            prop_assert_eq!(corpus.walks.len(), params.r * graph.n_nodes());
            for walk in &corpus.walks {
                prop_assert!(walk.len() <= params.l);
                prop_assert_eq!(walk.len(), params.l); // trees of depth >= 1 have no dead ends
                for pair in walk.windows(2) {
                    prop_assert!(graph.has_edge(pair[0], pair[1]));
                }
            }
        }

        #[test]
        fn walks_are_seed_deterministic(seed in 0u64..200) {
            let graph = tree_to_graph(&full_binary_tree(3));
            let params = WalkParams { l: 8, r: 4, p: 1.0, q: 2.0 };
            let a = generate_walks(&graph, &params, seed).unwrap();
            let b = generate_walks(&graph, &params, seed).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
